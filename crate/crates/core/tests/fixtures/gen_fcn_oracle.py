"""Regenerates fcn_oracle.json: FCN factor values at 50-digit precision.

Inputs are drawn as f64 values and stored with repr() so the Rust side reads
the exact same binary numbers; expected outputs are the correctly rounded f64
of the high-precision result.

    python3 gen_fcn_oracle.py > fcn_oracle.json
"""

import json
import random

import mpmath

mpmath.mp.dps = 50
rng = random.Random(20240601)
N = 50
BASE = 30_000_000  # 300.0 at tick size 1e-5


def f64(x):
    return repr(float(x))


def fundamental():
    out = []
    while len(out) < N:
        p_star = rng.randint(BASE // 2, BASE * 2)
        p_t = rng.randint(BASE // 2, BASE * 2)
        if abs(p_star - p_t) < 1000:
            continue
        tau_star = rng.uniform(1.0, 200.0)
        exact = mpmath.log(mpmath.mpf(p_star) / p_t) / mpmath.mpf(tau_star)
        out.append({"tau_star": f64(tau_star), "p_star": p_star, "p_t": p_t, "expected": f64(exact)})
    return out


def chartist():
    out = []
    while len(out) < N:
        tau = rng.randint(1, 200)
        extra = rng.randint(0, 30)
        p = BASE + rng.randint(-3_000_000, 3_000_000)
        history = [p]
        for _ in range(tau + extra):
            p = max(1_000_000, p + rng.randint(-200_000, 200_000))
            history.append(p)
        # literal average of one-step log returns over the last tau steps
        n = len(history)
        total = mpmath.mpf(0)
        for j in range(1, tau + 1):
            total += mpmath.log(mpmath.mpf(history[n - j]) / history[n - j - 1])
        exact = total / tau
        if history[-1] == history[-1 - tau]:
            continue
        out.append({"tau": tau, "history": history, "expected": f64(exact)})
    return out


def expected_return():
    out = []
    while len(out) < N:
        w = [rng.expovariate(1.0) for _ in range(3)]
        x = [rng.uniform(-0.01, 0.01) for _ in range(3)]
        terms = [mpmath.mpf(a) * mpmath.mpf(b) for a, b in zip(w, x)]
        num = sum(terms)
        # keep the sum well conditioned
        if abs(num) < 1e-2 * sum(abs(t) for t in terms):
            continue
        exact = num / (mpmath.mpf(w[0]) + mpmath.mpf(w[1]) + mpmath.mpf(w[2]))
        out.append({
            "w_fundamental": f64(w[0]), "w_chart": f64(w[1]), "w_noise": f64(w[2]),
            "f": f64(x[0]), "c": f64(x[1]), "n": f64(x[2]), "expected": f64(exact),
        })
    return out


def expected_price():
    out = []
    for _ in range(N):
        p_t = rng.uniform(100.0, 600.0)
        r_hat = rng.uniform(-0.002, 0.002)
        tau = rng.randint(1, 200)
        exact = mpmath.mpf(p_t) * mpmath.exp(mpmath.mpf(r_hat) * tau)
        out.append({"p_t": f64(p_t), "r_hat": f64(r_hat), "tau": tau, "expected": f64(exact)})
    return out


print(json.dumps({
    "fundamental": fundamental(),
    "chartist": chartist(),
    "expected_return": expected_return(),
    "expected_price": expected_price(),
}, indent=1))
