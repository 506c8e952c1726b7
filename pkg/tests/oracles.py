"""Independent reference implementations used to freeze expected values.

Nothing in here imports the package under test.  Each function derives
its answer from first principles (state vectors, explicit matrices,
plain loops) so the unit tests compare two genuinely different routes to
the same number.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 50


# ---------------------------------------------------------------------------
# Entropy / eavesdropper bound, at 50 decimal digits

def mp_binary_entropy(x) -> float:
    x = mp.mpf(x)
    if x == 0 or x == 1:
        return 0.0
    h = -x * mp.log(x, 2) - (1 - x) * mp.log(1 - x, 2)
    return float(h)


def mp_eve_information(s_value) -> float:
    s = abs(mp.mpf(s_value))
    # a float s touching 2*sqrt(2) can square to just under 8
    arg = max(s * s / 4 - 1, mp.mpf(0))
    lam = min((1 + mp.sqrt(arg)) / 2, mp.mpf(1))
    return mp_binary_entropy(lam)


# ---------------------------------------------------------------------------
# Two-photon polarization states, computed from explicit state vectors.
# Angles in degrees, measurement outcomes in {+1, -1}.

def _ket(theta_deg: float) -> np.ndarray:
    t = np.deg2rad(theta_deg)
    return np.array([np.cos(t), np.sin(t)])


def _projector(theta_deg: float, outcome: int) -> np.ndarray:
    # +1 transmits the analyzer at theta, -1 the orthogonal port
    k = _ket(theta_deg if outcome > 0 else theta_deg + 90.0)
    return np.outer(k, k)


_SINGLET = (np.kron(_ket(0.0), _ket(90.0)) - np.kron(_ket(90.0), _ket(0.0))) / np.sqrt(2.0)


def werner_joint_probability(theta_a: float, theta_b: float, i: int, j: int,
                             visibility: float = 1.0) -> float:
    """P(i, j) for a singlet mixed with white noise, by direct trace."""
    rho = visibility * np.outer(_SINGLET, _SINGLET) + (1.0 - visibility) * np.eye(4) / 4.0
    op = np.kron(_projector(theta_a, i), _projector(theta_b, j))
    return float(np.trace(rho @ op).real)


def intercept_resend_joint_probability(theta_a: float, theta_b: float,
                                       i: int, j: int, eve_angle: float) -> float:
    """P(i, j) when the Bob arm is measured at eve_angle and re-prepared.

    Enumerates the intermediate outcome: P(i, s) from the singlet, then
    Malus's law for Bob measuring the re-prepared photon.
    """
    total = 0.0
    for s in (1, -1):
        p_is = werner_joint_probability(theta_a, eve_angle, i, s, 1.0)
        resent = _ket(eve_angle if s > 0 else eve_angle + 90.0)
        amp = _ket(theta_b if j > 0 else theta_b + 90.0) @ resent
        total += p_is * amp * amp
    return float(total)


def correlation_from_table(prob_fn) -> float:
    """E = sum_ij i*j*P(i,j) for any joint probability function of (i, j)."""
    return sum(i * j * prob_fn(i, j) for i in (1, -1) for j in (1, -1))


# ---------------------------------------------------------------------------
# Toeplitz hashing by explicit matrix construction

def toeplitz_matrix(seed_bits: np.ndarray, m: int, n: int) -> np.ndarray:
    s = np.asarray(seed_bits, dtype=np.uint8)
    assert len(s) == n + m - 1
    t = np.zeros((m, n), dtype=np.uint8)
    for i in range(m):
        for j in range(n):
            t[i, j] = s[j - i + m - 1]
    return t


def toeplitz_hash_reference(bits: np.ndarray, seed_bits: np.ndarray, m: int) -> np.ndarray:
    x = np.asarray(bits, dtype=np.uint8)
    t = toeplitz_matrix(seed_bits, m, len(x))
    return ((t @ x.astype(np.int64)) % 2).astype(np.uint8)


# ---------------------------------------------------------------------------
# Naive iterated mutual-nearest-neighbor pairing (plain loops)

def _nearest(value, pool_values, pool_alive):
    """Index of the nearest alive entry; ties prefer the lower index."""
    best = None
    best_d = None
    for idx in pool_alive:
        d = abs(int(pool_values[idx]) - int(value))
        if best_d is None or d < best_d:
            best, best_d = idx, d
    return best, best_d


def naive_mutual_match(alice_ticks, bob_ticks, delay, half_window):
    """O(n^2) reference for the coincidence matcher.

    Same contract: repeat rounds of mutual-nearest in-window pairing
    until closure, each tag used at most once, ties to the earlier tag.
    Returns (alice_indices, bob_indices) sorted by alice index.
    """
    a = [int(t) for t in alice_ticks]
    b = [int(t) - int(delay) for t in bob_ticks]
    alive_a = list(range(len(a)))
    alive_b = list(range(len(b)))
    pairs = []
    while alive_a and alive_b:
        near_b = {i: _nearest(a[i], b, alive_b) for i in alive_a}
        near_a = {j: _nearest(b[j], a, alive_a) for j in alive_b}
        matched = []
        for i in alive_a:
            j, d = near_b[i]
            if near_a[j][0] == i and d <= half_window:
                matched.append((i, j))
        if not matched:
            break
        pairs.extend(matched)
        used_a = {i for i, _ in matched}
        used_b = {j for _, j in matched}
        alive_a = [i for i in alive_a if i not in used_a]
        alive_b = [j for j in alive_b if j not in used_b]
    pairs.sort()
    ia = np.array([i for i, _ in pairs], dtype=np.int64)
    ib = np.array([j for _, j in pairs], dtype=np.int64)
    return ia, ib
