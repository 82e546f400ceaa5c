use lhring_web::{closed_ring_series, dephasing_series, validity_table, COLUMNS};

#[test]
fn uniform_ring_reaches_one_over_m() {
    let rows = closed_ring_series(16, 0.0, 1, 10.0).unwrap();
    assert_eq!(rows.len() % COLUMNS, 0);
    let last = &rows[rows.len() - COLUMNS..];
    assert_eq!(last[0], 10.0);
    assert!((last[1] - 1.0 / 16.0).abs() < 1e-3);
}

#[test]
fn disorder_changes_the_outcome() {
    let clean = closed_ring_series(16, 0.0, 1, 5.0).unwrap();
    let dirty = closed_ring_series(16, 20.0, 1, 5.0).unwrap();
    assert_ne!(clean, dirty);
}

#[test]
fn dephasing_raises_transmission() {
    let closed = dephasing_series(8, 0.0, 100.0, 5.0).unwrap();
    let open = dephasing_series(8, 0.4, 100.0, 5.0).unwrap();
    let n = closed.len();
    assert!(open[n - COLUMNS + 1] > closed[n - COLUMNS + 1]);
}

#[test]
fn validity_flags() {
    assert_eq!(validity_table(5.0, 100.0, 5.0, 5).unwrap()[0], 1.0);
    let slow = validity_table(5.0, 1.0, 5.0, 5).unwrap();
    assert_eq!(slow[0], 0.0);
    assert_eq!(slow.len(), 8);
    assert!(validity_table(-1.0, 1.0, 5.0, 5).is_err());
}
