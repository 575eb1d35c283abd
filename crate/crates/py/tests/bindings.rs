use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

fn run(code: &str) {
    Python::attach(|py| {
        let module = wrap_pymodule!(blindgain_py::blindgain_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("bg", module).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn scalar_functions() {
    run(r#"
assert bg.normalization_alpha(10.0, 100, [1.0] * 20) == 0.005
assert bg.moments("rayleigh", 2) == (2.0, 6.0, 2.0)
a, clamped = bg.blind_estimate(0.5, 0.01, 3.0)
assert a == 0.0 and clamped
assert abs(bg.varrho_closed_form("rayleigh", 100, [1.0] * 20) - 1.3128e-3) < 1e-7
"#);
}

#[test]
fn channel_class() {
    run(r#"
ch = bg.Channel("keyhole", 10, [1.0, 2.0], seed=4, trial=7)
assert repr(ch) == "Channel(model='keyhole', M=10, K=2)"
assert ch.betas == [1.0, 2.0]
g = ch.gram()
assert abs(g[0][1] - g[1][0].conjugate()) < 1e-12
eps = ch.epsilon(0)
assert abs(eps - (abs(g[0][1]) ** 2 - 2.0 * g[0][0].real)) < 1e-9
"#);
}

#[test]
fn errors_map_to_python_exceptions() {
    run(r#"
for call, exc in [
    (lambda: bg.normalization_alpha(-1.0, 10, [1.0]), ValueError),
    (lambda: bg.varrho_closed_form("rayleigh", 10, [1.0]), ValueError),
    (lambda: bg.Channel("rayleigh", 4, [1.0], seed=1).effective_gain(3), IndexError),
    (lambda: bg.run_sweep("{}"), ValueError),
]:
    try:
        call()
    except exc:
        pass
    else:
        raise AssertionError(call)
"#);
}

#[test]
fn sweep_returns_csv() {
    run(r#"
import json
cfg = json.loads(bg.default_config())
cfg.update(M=8, K=2, rho_db_grid=[0], T_grid=["inf"], trials=50, estimators=["blind"])
lines = bg.run_sweep(json.dumps(cfg)).splitlines()
assert lines[0] == bg.CSV_HEADER
assert len(lines) == 3
"#);
}
