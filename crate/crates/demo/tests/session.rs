use regnn_demo::session::{compare, explain, train};
use serde_json::Value;

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn compare_reports_both_models() {
    let out = json(&compare(r#"{"n": 1500, "seed": 2}"#).unwrap());
    assert_eq!(out["n"], 1500);
    assert_eq!(out["hidden_term"], "m1:x_f");
    assert_eq!(out["full"]["interactions"].as_array().unwrap().len(), 12);
    assert!(out["oracle_twin"]["p_int"].as_f64().unwrap() < 1e-6);
    assert!(out["full"]["max_vif"].as_f64().unwrap() >= 1.0);
}

#[test]
fn bad_parameters_are_reported() {
    assert!(compare(r#"{"rho": 1.5}"#).unwrap_err().contains("correlation"));
    assert!(compare(r#"{"nn": 3}"#).unwrap_err().contains("bad parameters"));
    assert!(compare("[").is_err());
}

#[test]
fn train_then_explain() {
    let out = json(&train(r#"{"n": 400, "epochs": 5, "seed": 1}"#).unwrap());
    assert_eq!(out["trajectory"].as_array().unwrap().len(), 5);
    let groups = out["margins"]["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 3);
    assert!(groups.iter().all(|g| g["rows"].as_array().unwrap().len() == 11));
    assert_eq!(out["features"].as_array().unwrap().len(), 12);

    let a = explain(r#"{"feature": "m2", "bins": 8, "samples": 50}"#).unwrap();
    let b = explain(r#"{"feature": "m2", "bins": 8, "samples": 50}"#).unwrap();
    assert_eq!(a, b);
    let e = json(&a);
    assert_eq!(e["ale"]["feature"], "m2");
    assert_eq!(e["importance"].as_array().unwrap().len(), 12);
    assert!(explain(r#"{"feature": "nope"}"#).is_err());
}

#[test]
fn explain_needs_a_model() {
    std::thread::spawn(|| assert!(explain("{}").unwrap_err().contains("train")))
        .join()
        .unwrap();
}
