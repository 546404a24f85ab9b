"""How much does pose prediction buy over just holding the last pose?

Feeds synthetic head-motion traces to the autoregressive predictor and to the
zero-order-hold baseline, then prints the position RMSE of each at several
lookahead horizons. The AR model should win by a wide margin on smooth motion
and tie on a static pose.
"""

import numpy as np

from vcstream.predictor import AutoRegressivePredictor, PredictorConfig, ZeroOrderHold
from vcstream.traces import generate_trace

RATE = 60.0
HORIZONS_MS = [17, 33, 60, 100]


def rmse_for(trace, lookahead_us):
    cfg = PredictorConfig(order_p=2, window_w=60, tick_hz=RATE)
    ar, zoh = AutoRegressivePredictor(cfg), ZeroOrderHold(cfg)
    k = round(lookahead_us * RATE / 1e6)
    err_ar, err_zoh = [], []
    for i, pose in enumerate(trace):
        ar.push_sample(pose)
        zoh.push_sample(pose)
        if i >= cfg.window_w and i + k < len(trace):
            actual = trace[i + k].position
            err_ar.append(np.linalg.norm(ar.predict(lookahead_us).position - actual))
            err_zoh.append(np.linalg.norm(zoh.predict(lookahead_us).position - actual))
    rm = lambda e: float(np.sqrt(np.mean(np.square(e))))
    return rm(err_ar), rm(err_zoh)


def main():
    traces = {
        "static": generate_trace("static", 6.0, RATE),
        "linear": generate_trace("linear", 6.0, RATE, velocity=(0.4, 0, 0)),
        "sinusoid 1 Hz": generate_trace("sinusoid", 6.0, RATE, amplitude=0.5, freq_hz=1.0),
        "orbit 8 s": generate_trace("orbit", 6.0, RATE, radius=3.0, period_s=8.0),
    }
    print(f"{'trace':<14} {'lookahead':>9}   {'AR rmse':>10} {'ZOH rmse':>10}   gain")
    for name, trace in traces.items():
        for ms in HORIZONS_MS:
            ar, zoh = rmse_for(trace, ms * 1000)
            gain = "-" if zoh == 0 else f"{zoh / max(ar, 1e-12):5.1f}x"
            print(f"{name:<14} {ms:>6} ms   {ar:>10.5f} {zoh:>10.5f}   {gain}")
        print()


if __name__ == "__main__":
    main()
