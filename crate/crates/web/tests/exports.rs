use qs_trotter_web::{fock_oracle, lie_error_curve, trotter_convergence};
use serde_json::Value;

fn parse(s: String) -> Value {
    let v: Value = serde_json::from_str(&s).expect("valid json");
    assert!(v.get("error").is_none(), "{v}");
    v
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn trotter_curve_decreases_first_order() {
    let v = parse(trotter_convergence(7, 3, 9));
    let errors = floats(&v["errors"]);
    assert_eq!(errors.len(), 8);
    assert_eq!(v["strictly_decreasing"], Value::Bool(true));
    let rate = v["estimated_rate"].as_f64().unwrap();
    assert!((rate - 1.0).abs() < 0.15, "rate {rate}");
}

#[test]
fn lie_curve_halves_and_vanishes_when_commuting() {
    let v = parse(lie_error_curve(0.7, 1.0, 10));
    let e = floats(&v["errors"]);
    let last = e[e.len() - 1] / e[e.len() - 2];
    assert!((last - 0.5).abs() < 0.05, "ratio {last}");
    let c = parse(lie_error_curve(0.0, 1.0, 10));
    assert!(floats(&c["errors"]).iter().all(|x| *x < 1e-12));
}

#[test]
fn fock_curve_converges() {
    let v = parse(fock_oracle(3, 2, 7));
    let e = floats(&v["errors"]);
    assert_eq!(floats(&v["slots"]), vec![4.0, 8.0, 16.0, 32.0, 64.0, 128.0]);
    assert!(e[e.len() - 1] < e[0] / 8.0, "{e:?}");
    assert!(floats(&v["vacuum_norm_defect"]).iter().all(|d| *d < 1e-10));
}

#[test]
fn bad_arguments_come_back_as_errors() {
    let v: Value = serde_json::from_str(&lie_error_curve(1.0, -1.0, 4)).unwrap();
    assert!(v["error"].is_string());
}
