"""Stochastic entangled-photon-pair channel.

Simulates a polarization-entangled pair source feeding two passive
measurement stations.  Alice's station splits incoming photons over three
analyzer settings (one reserved for key generation, two for a CHSH test),
Bob's over two.  Pair emission is Poissonian; each photon is routed,
measured, optionally lost, timestamped with jitter, and mixed with
background events.  An optional intercept-resend eavesdropper acts on
Bob's arm.

All probabilities derive from the singlet-state correlation
E(ta, tb) = -V * cos 2(ta - tb), degraded by a two-visibility model, or
from the intercept-resend correlation
E(ta, tb) = -cos 2(ta - e) * cos 2(tb - e).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from .timetag import TICK_SECONDS, seconds_to_ticks

SQRT2 = math.sqrt(2.0)


class AliceSetting(IntEnum):
    """Analyzer settings on Alice's side (passive 50/25/25 routing)."""

    KEY = 0     # 0 deg, paired with Bob's KEY setting for raw key bits
    BELL_1 = 1  # +22.5 deg
    BELL_2 = 2  # "+1" port at 157.5 deg (equivalently -22.5 deg)


class BobSetting(IntEnum):
    KEY = 0     # 0 deg
    DIAG = 1    # 45 deg


# The four CHSH correlation terms, in the order they enter
# S = E1 + E2 + E3 - E4.
CHSH_TERMS = (
    (AliceSetting.BELL_1, BobSetting.KEY),
    (AliceSetting.BELL_1, BobSetting.DIAG),
    (AliceSetting.BELL_2, BobSetting.KEY),
    (AliceSetting.BELL_2, BobSetting.DIAG),
)
CHSH_SIGNS = (1.0, 1.0, 1.0, -1.0)


@dataclass(frozen=True)
class SettingGeometry:
    """Analyzer angles and the detector-id / outcome-sign map.

    Angles are the orientations of each setting's "+1" output in degrees.
    ``alice_detectors[s]`` and ``bob_detectors[s]`` give the (plus, minus)
    detector ids of setting ``s``.  The defaults place Alice's second Bell
    setting's "+1" port at 157.5 deg so that an ideal singlet yields
    S = -2*sqrt(2) exactly under the sign convention above.
    """

    alice_plus_angles: tuple = (0.0, 22.5, 157.5)
    bob_plus_angles: tuple = (0.0, 45.0)
    alice_detectors: tuple = ((1, 2), (3, 4), (5, 6))
    bob_detectors: tuple = ((1, 2), (3, 4))

    def __post_init__(self):
        a_ids = [d for pair in self.alice_detectors for d in pair]
        b_ids = [d for pair in self.bob_detectors for d in pair]
        if sorted(a_ids) != [1, 2, 3, 4, 5, 6] or sorted(b_ids) != [1, 2, 3, 4]:
            raise ValueError("detector ids must cover 1..6 (Alice) and 1..4 (Bob)")

    def alice_outcome_sign(self, detector: int) -> int:
        """+1/-1 outcome carried by an Alice detector id."""
        for plus, minus in self.alice_detectors:
            if detector == plus:
                return 1
            if detector == minus:
                return -1
        raise ValueError(f"unknown Alice detector {detector}")

    def bob_outcome_sign(self, detector: int) -> int:
        for plus, minus in self.bob_detectors:
            if detector == plus:
                return 1
            if detector == minus:
                return -1
        raise ValueError(f"unknown Bob detector {detector}")

    def alice_setting_of(self, detector: int) -> AliceSetting:
        for s, (plus, minus) in enumerate(self.alice_detectors):
            if detector in (plus, minus):
                return AliceSetting(s)
        raise ValueError(f"unknown Alice detector {detector}")

    def bob_setting_of(self, detector: int) -> BobSetting:
        for s, (plus, minus) in enumerate(self.bob_detectors):
            if detector in (plus, minus):
                return BobSetting(s)
        raise ValueError(f"unknown Bob detector {detector}")


def standard_geometry() -> SettingGeometry:
    return SettingGeometry()


@dataclass(frozen=True)
class ChannelConfig:
    """Source, link and detection parameters.

    pair_rate            emitted pairs per second
    loss_db_bob          extra link loss on Bob's arm, dB
    detector_efficiency  per-photon detection probability (both sides)
    visibility_hv        correlation visibility when both stations measure
                         in the key (H/V) basis
    visibility_diag      visibility for any pair involving a rotated setting
    background_rate      uncorrelated events per second per detector
    jitter_sigma         per-photon Gaussian timing jitter, ns
    bob_delay            Bob's clock/path offset relative to Alice, ns
    duration             simulated acquisition time, s
    rng_seed             seed for the event sampler
    """

    pair_rate: float = 18000.0
    loss_db_bob: float = 3.0
    detector_efficiency: float = 1.0
    visibility_hv: float = 0.94
    visibility_diag: float = 0.8839
    background_rate: float = 20000.0
    jitter_sigma: float = 0.5
    bob_delay: float = 10000.0
    duration: float = 10.0
    rng_seed: int = 1

    def __post_init__(self):
        if self.pair_rate < 0:
            raise ValueError("pair_rate must be >= 0")
        if self.loss_db_bob < 0:
            raise ValueError("loss_db_bob must be >= 0")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError("detector_efficiency must be in [0, 1]")
        for name in ("visibility_hv", "visibility_diag"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.background_rate < 0:
            raise ValueError("background_rate must be >= 0")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")

    @property
    def bob_transmission(self) -> float:
        return 10.0 ** (-self.loss_db_bob / 10.0)


@dataclass(frozen=True)
class AttackConfig:
    """Intercept-resend eavesdropper on Bob's arm.

    A fraction ``intercept_fraction`` of pairs has Bob's photon measured by
    Eve at ``attack_basis`` degrees and resent in her outcome's
    polarization.
    """

    intercept_fraction: float = 0.0
    attack_basis: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.intercept_fraction <= 1.0:
            raise ValueError("intercept_fraction must be in [0, 1]")


@dataclass
class GroundTruth:
    """Per-pair bookkeeping for test oracles.  Never sent on the wire.

    Arrays are aligned over all emitted pairs.  ``alice_tick``/``bob_tick``
    are only meaningful where the respective ``*_detected`` flag is set.
    """

    alice_setting: np.ndarray
    bob_setting: np.ndarray
    alice_outcome: np.ndarray
    bob_outcome: np.ndarray
    alice_detected: np.ndarray
    bob_detected: np.ndarray
    alice_tick: np.ndarray
    bob_tick: np.ndarray
    attacked: np.ndarray

    @property
    def pair_count(self) -> int:
        return len(self.alice_setting)

    def surviving_pairs(self) -> np.ndarray:
        """Mask of pairs detected on both sides."""
        return self.alice_detected & self.bob_detected


@dataclass
class EventStreams:
    """Time-ordered detection records for both stations.

    Ticks are 125 ps units on a common absolute origin; detectors are the
    physical ids of the geometry (Alice 1..6, Bob 1..4).
    """

    alice_ticks: np.ndarray
    alice_detectors: np.ndarray
    bob_ticks: np.ndarray
    bob_detectors: np.ndarray
    config: ChannelConfig
    ground_truth: Optional[GroundTruth] = None


def _as_angle_rad2(deg):
    """2*angle in radians; the factor 2 is the polarization doubling."""
    return 2.0 * np.deg2rad(deg)


def singlet_correlation(theta_a: float, theta_b: float, visibility: float = 1.0) -> float:
    """E(ta, tb) for a visibility-degraded singlet."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must be in [0, 1]")
    return -visibility * math.cos(math.radians(2.0 * (theta_a - theta_b)))


def intercept_resend_correlation(theta_a: float, theta_b: float, eve_angle: float = 0.0) -> float:
    """E(ta, tb) after an intercept-resend measurement at ``eve_angle``."""
    return -math.cos(math.radians(2.0 * (theta_a - eve_angle))) * math.cos(
        math.radians(2.0 * (theta_b - eve_angle))
    )


def _table_from_correlation(e: float) -> np.ndarray:
    # P(i, j) = (1 + i*j*E)/4 with uniform marginals; rows are Alice +1/-1,
    # columns Bob +1/-1.
    p_same = (1.0 + e) / 4.0
    p_diff = (1.0 - e) / 4.0
    return np.array([[p_same, p_diff], [p_diff, p_same]])


def joint_probability(theta_a: float, theta_b: float, visibility: float = 1.0) -> np.ndarray:
    """2x2 outcome table P(i, j) for analyzer angles in degrees.

    Index 0 is the +1 outcome, index 1 the -1 outcome; rows are Alice.
    """
    return _table_from_correlation(singlet_correlation(theta_a, theta_b, visibility))


def intercept_resend_probability(
    theta_a: float, theta_b: float, eve_angle: float = 0.0
) -> np.ndarray:
    """2x2 outcome table under a full intercept-resend attack."""
    return _table_from_correlation(intercept_resend_correlation(theta_a, theta_b, eve_angle))


# Routing probabilities of the passive splitter trees.
ALICE_ROUTING = {AliceSetting.KEY: 0.5, AliceSetting.BELL_1: 0.25, AliceSetting.BELL_2: 0.25}
BOB_ROUTING = {BobSetting.KEY: 0.5, BobSetting.DIAG: 0.5}


def route_detection(side: str, rng: np.random.Generator, size: Optional[int] = None):
    """Sample the analyzer setting a photon is routed to.

    ``side`` is ``"alice"`` or ``"bob"``.  Returns a scalar setting when
    ``size`` is None, else an int8 array.
    """
    if side == "alice":
        u = rng.random(size)
        out = np.where(u < 0.5, AliceSetting.KEY, np.where(u < 0.75, AliceSetting.BELL_1, AliceSetting.BELL_2))
        return AliceSetting(int(out)) if size is None else out.astype(np.int8)
    if side == "bob":
        u = rng.random(size)
        out = np.where(u < 0.5, BobSetting.KEY, BobSetting.DIAG)
        return BobSetting(int(out)) if size is None else out.astype(np.int8)
    raise ValueError("side must be 'alice' or 'bob'")


def _pair_correlation(
    a_set: np.ndarray,
    b_set: np.ndarray,
    attacked: np.ndarray,
    channel: ChannelConfig,
    attack: AttackConfig,
    geometry: SettingGeometry,
) -> np.ndarray:
    """Per-pair correlation coefficient E for outcome sampling."""
    a_ang = np.asarray(geometry.alice_plus_angles)[a_set]
    b_ang = np.asarray(geometry.bob_plus_angles)[b_set]
    base = -np.cos(_as_angle_rad2(a_ang - b_ang))
    hv = (a_set == AliceSetting.KEY) & (b_set == BobSetting.KEY)
    vis = np.where(hv, channel.visibility_hv, channel.visibility_diag)
    e_pair = vis * base
    if attack.intercept_fraction > 0.0:
        e_ir = -np.cos(_as_angle_rad2(a_ang - attack.attack_basis)) * np.cos(
            _as_angle_rad2(b_ang - attack.attack_basis)
        )
        e_pair = np.where(attacked, e_ir, e_pair)
    return e_pair


def analytic_chsh(
    channel: ChannelConfig,
    attack: AttackConfig = AttackConfig(),
    geometry: Optional[SettingGeometry] = None,
) -> float:
    """Exact S for the configured model (no sampling noise)."""
    geometry = geometry or standard_geometry()
    p = attack.intercept_fraction
    s = 0.0
    for (sa, sb), sign in zip(CHSH_TERMS, CHSH_SIGNS):
        ta = geometry.alice_plus_angles[sa]
        tb = geometry.bob_plus_angles[sb]
        e = (1.0 - p) * singlet_correlation(ta, tb, channel.visibility_diag)
        e += p * intercept_resend_correlation(ta, tb, attack.attack_basis)
        s += sign * e
    return s


def analytic_qber(channel: ChannelConfig, attack: AttackConfig = AttackConfig()) -> float:
    """Error rate of the key branch, ignoring background accidentals."""
    p = attack.intercept_fraction
    e = (1.0 - p) * (-channel.visibility_hv)
    e += p * intercept_resend_correlation(0.0, 0.0, attack.attack_basis)
    return (1.0 + e) / 2.0


def _time_origin_ticks(channel: ChannelConfig) -> int:
    # Keeps every timestamp nonnegative even for negative Bob delays and
    # jitter excursions near t = 0.
    guard_s = 10.0 * channel.jitter_sigma * 1e-9 + 1e-6
    origin_s = max(0.0, -channel.bob_delay * 1e-9) + guard_s
    return seconds_to_ticks(origin_s)


def _sample_pairs(
    channel: ChannelConfig,
    attack: AttackConfig,
    geometry: SettingGeometry,
    rng: np.random.Generator,
    t0: float,
    t1: float,
):
    """Emit and measure pairs with emission times in [t0, t1)."""
    n = rng.poisson(channel.pair_rate * (t1 - t0))
    t_emit = np.sort(rng.uniform(t0, t1, n))
    attacked = (
        rng.random(n) < attack.intercept_fraction
        if attack.intercept_fraction > 0.0
        else np.zeros(n, dtype=bool)
    )
    a_set = route_detection("alice", rng, n)
    b_set = route_detection("bob", rng, n)

    e_pair = _pair_correlation(a_set, b_set, attacked, channel, attack, geometry)
    a_out = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    b_out = np.where(rng.random(n) < (1.0 + a_out * e_pair) / 2.0, 1, -1).astype(np.int8)

    eff = channel.detector_efficiency
    a_det_flag = rng.random(n) < eff
    b_det_flag = rng.random(n) < eff * channel.bob_transmission

    jit = channel.jitter_sigma * 1e-9
    t_a = t_emit + (jit * rng.standard_normal(n) if jit > 0 else 0.0)
    t_b = t_emit + channel.bob_delay * 1e-9 + (jit * rng.standard_normal(n) if jit > 0 else 0.0)
    return t_emit, attacked, a_set, b_set, a_out, b_out, a_det_flag, b_det_flag, t_a, t_b


def _detector_ids(settings, outcomes, detector_table) -> np.ndarray:
    plus = np.array([pair[0] for pair in detector_table], dtype=np.uint8)
    minus = np.array([pair[1] for pair in detector_table], dtype=np.uint8)
    return np.where(outcomes > 0, plus[settings], minus[settings]).astype(np.uint8)


def _background(
    rate: float,
    detector_table,
    rng: np.random.Generator,
    t0: float,
    t1: float,
    offset_s: float,
):
    times = []
    dets = []
    for plus, minus in detector_table:
        for det in (plus, minus):
            k = rng.poisson(rate * (t1 - t0))
            times.append(rng.uniform(t0, t1, k) + offset_s)
            dets.append(np.full(k, det, dtype=np.uint8))
    if not times:
        return np.empty(0), np.empty(0, dtype=np.uint8)
    return np.concatenate(times), np.concatenate(dets)


def _to_ticks(times_s: np.ndarray, origin_tick: int) -> np.ndarray:
    ticks = np.rint(times_s / TICK_SECONDS).astype(np.int64) + origin_tick
    np.maximum(ticks, 0, out=ticks)
    return ticks.astype(np.uint64)


def generate_event_streams(
    channel: ChannelConfig,
    attack: AttackConfig = AttackConfig(),
    geometry: Optional[SettingGeometry] = None,
    ground_truth: bool = True,
    rng: Optional[np.random.Generator] = None,
    t_start: float = 0.0,
    t_stop: Optional[float] = None,
) -> EventStreams:
    """Simulate one acquisition and return both stations' tag streams.

    Deterministic for a fixed config: the sampler is seeded from
    ``channel.rng_seed`` unless an explicit generator is passed.
    """
    geometry = geometry or standard_geometry()
    rng = rng if rng is not None else np.random.default_rng(channel.rng_seed)
    t0 = t_start
    t1 = channel.duration if t_stop is None else t_stop
    origin = _time_origin_ticks(channel)

    (t_emit, attacked, a_set, b_set, a_out, b_out,
     a_flag, b_flag, t_a, t_b) = _sample_pairs(channel, attack, geometry, rng, t0, t1)

    a_pair_ticks = _to_ticks(t_a, origin)
    b_pair_ticks = _to_ticks(t_b, origin)
    a_pair_det = _detector_ids(a_set, a_out, geometry.alice_detectors)
    b_pair_det = _detector_ids(b_set, b_out, geometry.bob_detectors)

    bg_a_t, bg_a_d = _background(channel.background_rate, geometry.alice_detectors, rng, t0, t1, 0.0)
    bg_b_t, bg_b_d = _background(
        channel.background_rate, geometry.bob_detectors, rng, t0, t1, channel.bob_delay * 1e-9
    )

    a_ticks = np.concatenate([a_pair_ticks[a_flag], _to_ticks(bg_a_t, origin)])
    a_dets = np.concatenate([a_pair_det[a_flag], bg_a_d])
    b_ticks = np.concatenate([b_pair_ticks[b_flag], _to_ticks(bg_b_t, origin)])
    b_dets = np.concatenate([b_pair_det[b_flag], bg_b_d])

    order_a = np.argsort(a_ticks, kind="stable")
    order_b = np.argsort(b_ticks, kind="stable")
    a_ticks, a_dets = a_ticks[order_a], a_dets[order_a]
    b_ticks, b_dets = b_ticks[order_b], b_dets[order_b]

    truth = None
    if ground_truth:
        truth = GroundTruth(
            alice_setting=a_set,
            bob_setting=b_set,
            alice_outcome=a_out,
            bob_outcome=b_out,
            alice_detected=a_flag,
            bob_detected=b_flag,
            alice_tick=a_pair_ticks,
            bob_tick=b_pair_ticks,
            attacked=attacked,
        )
    return EventStreams(a_ticks, a_dets, b_ticks, b_dets, channel, truth)


class JointSegmentSource:
    """Lazily generates one acquisition in fixed time segments.

    Both sides' segments come from the same pair process, generated once
    per segment from spawned child seeds and re-cut on exact tick
    boundaries so that the concatenation of a side's segments equals the
    time-sorted full stream.  Memory stays bounded by a couple of
    segments regardless of run length.
    """

    def __init__(
        self,
        channel: ChannelConfig,
        attack: AttackConfig = AttackConfig(),
        geometry: Optional[SettingGeometry] = None,
        segment_seconds: float = 1.0,
    ):
        if segment_seconds <= 0:
            raise ValueError("segment_seconds must be > 0")
        slack_s = abs(channel.bob_delay) * 1e-9 + 10.0 * channel.jitter_sigma * 1e-9 + 1e-6
        if slack_s >= segment_seconds:
            raise ValueError("segment_seconds must exceed |bob_delay| plus jitter slack")
        self.channel = channel
        self.attack = attack
        self.geometry = geometry or standard_geometry()
        self.segment_seconds = segment_seconds
        self.origin_tick = _time_origin_ticks(channel)
        self.n_segments = int(math.ceil(channel.duration / segment_seconds)) if channel.duration > 0 else 0
        self._seeds = np.random.SeedSequence(channel.rng_seed).spawn(max(self.n_segments, 1))
        self._raw_index = 0
        self._carry = {
            "alice": (np.empty(0, np.uint64), np.empty(0, np.uint8)),
            "bob": (np.empty(0, np.uint64), np.empty(0, np.uint8)),
        }
        self._ready: dict = {"alice": [], "bob": []}
        self._emitted = 0
        self._lock = threading.Lock()

    def _boundary_tick(self, k: int) -> int:
        return self.origin_tick + seconds_to_ticks(k * self.segment_seconds)

    def _generate_raw(self, k: int) -> EventStreams:
        rng = np.random.default_rng(self._seeds[k])
        t0 = k * self.segment_seconds
        t1 = min((k + 1) * self.segment_seconds, self.channel.duration)
        return generate_event_streams(
            self.channel, self.attack, self.geometry,
            ground_truth=False, rng=rng, t_start=t0, t_stop=t1,
        )

    def _advance(self) -> bool:
        """Produce the next exact-boundary segment for both sides."""
        if self._emitted >= self.n_segments:
            return False
        k = self._emitted
        # Pull raw segments until raw k+1 has been seen (or the end); only
        # then is everything below boundary k+1 known, since jitter and the
        # Bob delay spill tags across adjacent boundaries at most.
        while self._raw_index <= k + 1 and self._raw_index < self.n_segments:
            raw = self._generate_raw(self._raw_index)
            for side, ticks, dets in (
                ("alice", raw.alice_ticks, raw.alice_detectors),
                ("bob", raw.bob_ticks, raw.bob_detectors),
            ):
                ct, cd = self._carry[side]
                self._carry[side] = (np.concatenate([ct, ticks]), np.concatenate([cd, dets]))
            self._raw_index += 1
        last = k + 1 >= self.n_segments
        boundary = self._boundary_tick(k + 1)
        for side in ("alice", "bob"):
            ticks, dets = self._carry[side]
            order = np.argsort(ticks, kind="stable")
            ticks, dets = ticks[order], dets[order]
            # The final segment flushes everything so no tail tag is lost.
            cut = len(ticks) if last else int(np.searchsorted(ticks, boundary, side="left"))
            self._ready[side].append((ticks[:cut], dets[:cut]))
            self._carry[side] = (ticks[cut:], dets[cut:])
        self._emitted += 1
        return True

    def segments(self, side: str):
        """Iterate (ticks, detectors) segments for one side.

        Both sides may iterate concurrently; a segment is freed once both
        have consumed it, so memory stays bounded.
        """
        if side not in ("alice", "bob"):
            raise ValueError("side must be 'alice' or 'bob'")
        while True:
            with self._lock:
                if not self._ready[side] and not self._advance():
                    return
                seg = self._ready[side].pop(0)
            yield seg
