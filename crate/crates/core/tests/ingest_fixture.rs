use frostroute::ingest::{aggregate_by_location, parse_sensor_csv, round_coordinate, write_sensor_csv, ColumnMapping};

const BAD3: &str = include_str!("../../../fixtures/sensors_3bad.csv");

#[test]
fn three_bad_rows_are_reported() {
    let out = parse_sensor_csv(BAD3.as_bytes(), &ColumnMapping::identity()).unwrap();
    let rows: Vec<(usize, &str)> = out.row_errors.iter().map(|e| (e.row, e.field.as_str())).collect();
    assert_eq!(rows, vec![(2, "friction"), (5, "state"), (7, "lat")]);
    assert_eq!(out.records.len() + out.row_errors.len(), BAD3.lines().count() - 1);
}

#[test]
fn clean_records_round_trip() {
    let out = parse_sensor_csv(BAD3.as_bytes(), &ColumnMapping::identity()).unwrap();
    let mut buf = Vec::new();
    write_sensor_csv(&mut buf, &out.records).unwrap();
    let back = parse_sensor_csv(buf.as_slice(), &ColumnMapping::identity()).unwrap();
    assert!(back.row_errors.is_empty());
    assert_eq!(back.records, out.records);
    let agg = aggregate_by_location(&back.records);
    assert_eq!(agg.aggregates.iter().map(|a| a.n_obs).sum::<usize>(), back.records.len());
}

#[test]
fn renamed_columns() {
    let text = BAD3.replacen("friction", "mu", 1).replacen("tsurf_c", "road_temp", 1);
    let mapping = ColumnMapping::from_json(r#"{"friction": "mu", "tsurf_c": "road_temp"}"#).unwrap();
    let out = parse_sensor_csv(text.as_bytes(), &mapping).unwrap();
    assert_eq!(out.records.len(), 5);
    assert!(parse_sensor_csv(text.as_bytes(), &ColumnMapping::identity()).is_err());
}

#[test]
fn rounding_golden_cases() {
    assert_eq!(round_coordinate(69.123456).unwrap(), 69.1235);
    assert_eq!(round_coordinate(-17.42345).unwrap(), -17.4235);
}
