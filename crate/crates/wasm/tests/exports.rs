use nvdd_wasm::{coherence_json, envelope_json, sensitivity_json};
use serde_json::Value;

fn parse(text: String) -> Value {
    serde_json::from_str(&text).unwrap()
}

#[test]
fn envelopes_start_at_one_and_order_by_pulses() {
    let doc = parse(envelope_json(0.011, &[0, 1, 8], 0.5, 64).unwrap());
    assert_eq!(doc["times"].as_array().unwrap().len(), 64);
    let curves = doc["curves"].as_array().unwrap();
    for c in curves {
        assert_eq!(c["values"][0], 1.0);
    }
    for i in 0..64 {
        let v: Vec<f64> = curves
            .iter()
            .map(|c| c["values"][i].as_f64().unwrap())
            .collect();
        assert!(v[0] <= v[1] && v[1] <= v[2]);
    }
}

#[test]
fn coherence_reaches_correlation_time() {
    let doc = parse(coherence_json(0.011, 40).unwrap());
    let points = doc["points"].as_array().unwrap();
    assert_eq!(points.len(), 40);
    assert_eq!(points[39]["t2"], doc["tau_c"]);
    assert_eq!(points[39]["capped"], true);
}

#[test]
fn sensitivity_reports_optimum() {
    let doc = parse(sensitivity_json(0.011, 1.0, 50e-9, 0.01, "telegraph", 30).unwrap());
    assert_eq!(doc["best"], 13);
    assert_eq!(doc["penalized"].as_array().unwrap().len(), 31);
    let ac = parse(sensitivity_json(0.011, 1.0, 50e-9, 0.01, "ac", 5).unwrap());
    assert_eq!(ac["ideal"][0]["mode"]["mode"], "ac");
}

#[test]
fn bad_inputs_are_reported() {
    assert!(envelope_json(2.0, &[1], 0.5, 10).is_err());
    assert!(envelope_json(0.011, &[1], 0.5, 1).is_err());
    assert!(sensitivity_json(0.011, 1.0, 0.0, 0.0, "fluctuating:0.2", 3).is_err());
    assert!(sensitivity_json(0.011, 1.0, 0.0, 0.0, "square", 3).is_err());
}
