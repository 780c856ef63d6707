use adept::persist::{read_matrix, write_matrix, PersistError};
use nalgebra::DMatrix;

#[test]
fn round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("m");
    let vals = [1.5, -0.0, f64::INFINITY, f64::NAN, f64::MIN_POSITIVE, -3e300];
    let m = DMatrix::from_column_slice(2, 3, &vals);
    write_matrix(&base, &m, serde_json::json!({"client": 3})).unwrap();
    let (back, header) = read_matrix(&base).unwrap();
    assert_eq!(header.shape, [2, 3]);
    assert_eq!(header.meta["client"], 3);
    let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&m));
    let raw = std::fs::read(dir.path().join("m.bin")).unwrap();
    assert_eq!(raw.len(), 48);
    assert_eq!(&raw[..8], &1.5f64.to_le_bytes());
}

#[test]
fn truncated_data_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("m");
    write_matrix(&base, &DMatrix::zeros(3, 3), serde_json::Value::Null).unwrap();
    std::fs::write(dir.path().join("m.bin"), [0u8; 16]).unwrap();
    assert!(matches!(read_matrix(&base), Err(PersistError::Format { .. })));
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_matrix(&dir.path().join("absent")), Err(PersistError::Io { .. })));
}
