use minvec_core::banach::LpSpace;
use minvec_core::minvec::{min_vector_sequence, MinimalVectorSequence, SolverConfig};
use minvec_core::operators::OperatorMatrix;
use nalgebra::DVector;

#[test]
fn sequence_round_trips_through_json() {
    let q = OperatorMatrix::volterra(6);
    let space = LpSpace::new(6, 3.0).unwrap();
    let x0 = DVector::from_element(6, 6f64.powf(-1.0 / 3.0));
    let seq = min_vector_sequence(&q, &x0, 0.6, 3, &space, &SolverConfig::default()).unwrap();
    let text = serde_json::to_string(&seq).unwrap();
    let back: MinimalVectorSequence = serde_json::from_str(&text).unwrap();
    assert_eq!(back, seq);
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["solutions"][0]["y"].as_array().unwrap().len(), 6);
}

#[test]
fn solver_config_rejects_unknown_fields() {
    let ok: SolverConfig = serde_json::from_str(r#"{"max_iter": 40, "path": "newton"}"#).unwrap();
    assert_eq!(ok.max_iter, 40);
    assert!(serde_json::from_str::<SolverConfig>(r#"{"max_iters": 40}"#).is_err());
}
