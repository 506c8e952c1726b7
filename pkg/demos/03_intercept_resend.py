"""Show why the Bell monitor catches an intercept-resend eavesdropper.

Eve measures a fraction p of Bob's photons in the key basis and resends
what she saw.  Attacked pairs still anti-correlate perfectly in the key
basis, so the QBER stays flat, but their rotated-basis correlations
collapse and |S| falls linearly: |S(p)| = 2 sqrt(2) - p sqrt(2).  At
p = 1 the channel looks classical (|S| = sqrt(2) < 2) while the key
itself remains error-free.
"""

import math

import numpy as np

from bellqkd.physics import AttackConfig, ChannelConfig, generate_event_streams
from bellqkd.privamp import eve_information
from bellqkd.sifting import (
    CoincidenceClass,
    chsh_value,
    classify,
    count_coincidences,
    extract_raw_key,
    qber,
)
from bellqkd.timetag import WindowConfig, find_delay, match_coincidences

channel = ChannelConfig(pair_rate=120_000, loss_db_bob=0.0, background_rate=0.0,
                        visibility_hv=1.0, visibility_diag=1.0, jitter_sigma=0.0,
                        duration=2.0, rng_seed=33)
cfg = WindowConfig()

print("ideal channel, Eve intercepting a fraction p of Bob's photons at 0 deg")
print(f"{'p':>6} {'|S| meas':>9} {'|S| model':>10} {'QBER':>7} {'I_Eve':>7}")
for p in (0.0, 0.116, 0.232, 0.5, 0.75, 1.0):
    ev = generate_event_streams(channel, AttackConfig(intercept_fraction=p),
                                ground_truth=False)
    delay = find_delay(ev.alice_ticks, ev.bob_ticks, cfg).delay_ticks
    ia, ib = match_coincidences(ev.alice_ticks, ev.bob_ticks, delay, cfg)
    a_det, b_det = ev.alice_detectors[ia], ev.bob_detectors[ib]
    bell = chsh_value(count_coincidences(a_det, b_det))
    cls = np.asarray(classify(a_det, b_det))
    key = cls == int(CoincidenceClass.KEY)
    q = qber(*extract_raw_key(a_det[key], b_det[key]))
    model = 2.0 * math.sqrt(2.0) - p * math.sqrt(2.0)
    s = abs(bell.s_value)
    info = eve_information(s) + 0.0 if s > 2.0 else 1.0
    bar = "#" * int(round(14 * (s - math.sqrt(2))))
    print(f"{p:6.3f} {s:9.4f} {model:10.4f} {q:7.4f} {info:7.4f}  {bar}")

print("""
The QBER column never moves: monitoring errors alone would miss this
attack entirely.  |S| is the tell - at p = 0.232 it sits at the paper's
measured 2.5, and once |S| <= 2 no secret key can be distilled (the
protocol layer aborts with an insecure-regime error there).""")
