"""Smoke test for the blindgain_py extension module.

Build and install first, e.g. `pip install --no-build-isolation crates/py`
or `maturin develop --release -m crates/py/Cargo.toml`.
"""

import csv
import io
import json
import math

import blindgain_py as bg


def close(a, b, rel=1e-9):
    return math.isclose(a, b, rel_tol=rel)


def main():
    assert close(bg.normalization_alpha(10.0, 100, [1.0] * 20), 0.005)
    assert bg.moments("keyhole", 2) == (2.0, 12.0, 8.0)
    assert bg.statistical_estimate(100, 1.0) == 100.0

    betas = [1.0] * 20
    assert close(bg.varrho_closed_form("rayleigh", 100, betas), 1.3128e-3, rel=1e-4)
    assert close(bg.varrho_closed_form("keyhole", 100, betas), 2.3383e-3, rel=1e-4)
    mean, stderr = bg.varrho_monte_carlo("rayleigh", 100, betas, trials=4000, seed=3)
    assert abs(mean - 1.3128e-3) < 4 * stderr, (mean, stderr)

    ch = bg.Channel("rayleigh", 64, [1.0] * 8, seed=9)
    assert (ch.num_antennas, ch.num_users, ch.model) == (64, 8, "rayleigh")
    again = bg.Channel("rayleigh", 64, [1.0] * 8, seed=9)
    assert ch.column(3) == again.column(3)
    gram = ch.gram()
    assert close(gram[2][2].real, ch.effective_gain(2))
    est, clamped = ch.blind_estimate(10.0, 0)
    alpha = bg.normalization_alpha(10.0, 64, [1.0] * 8)
    xi = ch.exact_power(10.0, 0)
    assert not clamped
    assert close(alpha * est * est + alpha * 7.0 * est + 1.0, xi)
    assert close(bg.blind_estimate(xi, alpha, 7.0)[0], est)
    x = ch.precode([1 + 0j] * 8, 10.0)
    assert len(x) == 64

    try:
        ch.effective_gain(8)
    except IndexError:
        pass
    else:
        raise AssertionError("out-of-range user accepted")
    try:
        bg.Channel("rician", 4, [1.0], seed=0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown model accepted")

    config = json.loads(bg.default_config())
    config.update(M=16, K=4, rho_db_grid=[0, 10], T_grid=[20, "inf"], trials=300)
    text = bg.run_sweep(json.dumps(config), workers=2)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert text.splitlines()[0] == bg.CSV_HEADER
    assert len(rows) == 2 * 3 * 2 * 2
    assert text == bg.run_sweep(json.dumps(config), workers=1)
    table = json.loads(bg.run_sweep_json(json.dumps(config)))
    assert len(table["rows"]) == len(rows)
    mse, _ = bg.normalized_mse([(1.0, 1.0), (3.0, 1.0)], 2.0)
    assert close(mse, 0.5)

    print("smoke test passed")


if __name__ == "__main__":
    main()
