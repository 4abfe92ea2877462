use proptest::prelude::*;
use regnn::data::{
    apply_preprocess, fit_preprocess, load_table, load_table_from_reader, split_rows, Column, Dataset, Kind, Role,
    Schema, VariableSpec,
};
use regnn::stats::{mean, variance};
use regnn::Error;

fn schema() -> Schema {
    Schema::new(vec![
        VariableSpec::new("y", Role::Outcome, Kind::Continuous),
        VariableSpec::new("dose", Role::Focal, Kind::Continuous),
        VariableSpec::new("age", Role::Moderator, Kind::Continuous),
        VariableSpec::new("edu", Role::Moderator, Kind::Ordinal),
        VariableSpec::new("region", Role::Moderator, Kind::Categorical(vec!["A".into(), "B".into(), "C".into()])),
        VariableSpec::new("w", Role::Weight, Kind::Continuous),
    ])
    .unwrap()
}

#[test]
fn loads_and_drops_incomplete_rows() {
    let csv = "y,dose,age,edu,region,w\n1.0,0.5,40,2,A,1.0\n,0.1,50,3,B,2.0\n2.5,-0.3,61,1,C,0.5\n";
    let ds = load_table_from_reader(csv.as_bytes(), &schema()).unwrap();
    assert_eq!(ds.n_rows(), 2);
    assert_eq!(ds.dropped(), 1);
    assert_eq!(ds.weights(), &[1.0, 0.5]);
}

#[test]
fn missing_column_is_schema_error() {
    let csv = "y,dose,edu,region,w\n1.0,0.5,2,A,1.0\n";
    assert!(matches!(load_table_from_reader(csv.as_bytes(), &schema()), Err(Error::Schema(_))));
}

#[test]
fn all_rows_dropped_is_empty_data() {
    let csv = "y,dose,age,edu,region,w\n,0.5,40,2,A,1.0\n";
    assert!(matches!(
        load_table_from_reader(csv.as_bytes(), &schema()),
        Err(Error::EmptyData { dropped: 1 })
    ));
}

#[test]
fn csv_round_trip_through_file() {
    let csv = "y,dose,age,edu,region,w\n1.0,0.5,40,2,A,1.0\n2.5,-0.3,61,1,C,0.5\n3.0,0.3,33,2,B,1.5\n";
    let ds = load_table_from_reader(csv.as_bytes(), &schema()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    ds.write_csv(std::fs::File::create(&path).unwrap(), Some("regnn test")).unwrap();
    let back = load_table(&path, &schema()).unwrap();
    assert_eq!(back.columns(), ds.columns());
}

#[test]
fn plan_examples() {
    let s = Schema::new(vec![
        VariableSpec::new("y", Role::Outcome, Kind::Continuous),
        VariableSpec::new("f", Role::Focal, Kind::Continuous),
        VariableSpec::new("m", Role::Moderator, Kind::Continuous),
        VariableSpec::new("g", Role::Moderator, Kind::Categorical(vec!["A".into(), "B".into(), "C".into()])),
    ])
    .unwrap();
    let train = Dataset::from_columns(
        s.clone(),
        vec![
            Column::Numeric(vec![1.0, 2.0, 4.0]),
            Column::Numeric(vec![0.0, 1.0, 3.0]),
            Column::Numeric(vec![1.0, 2.0, 3.0]),
            Column::Categorical(vec![0, 1, 2]),
        ],
    )
    .unwrap();
    let plan = fit_preprocess(&train).unwrap();
    let test = Dataset::from_columns(
        s.clone(),
        vec![
            Column::Numeric(vec![0.0, 1.0]),
            Column::Numeric(vec![0.0, 1.0]),
            Column::Numeric(vec![2.0, 4.0]),
            Column::Categorical(vec![0, 2]),
        ],
    )
    .unwrap();
    let prepared = apply_preprocess(&plan, &test).unwrap();
    assert_eq!(prepared.moderator_names, vec!["m", "g=B", "g=C"]);
    assert_eq!(prepared.moderators.row(0).to_vec(), vec![0.0, 0.0, 0.0]);
    assert_eq!(prepared.moderators.row(1).to_vec(), vec![2.0, 0.0, 1.0]);

    let constant = Dataset::from_columns(
        s,
        vec![
            Column::Numeric(vec![1.0, 2.0, 4.0]),
            Column::Numeric(vec![0.0, 1.0, 3.0]),
            Column::Numeric(vec![5.0, 5.0, 5.0]),
            Column::Categorical(vec![0, 1, 2]),
        ],
    )
    .unwrap();
    assert!(matches!(fit_preprocess(&constant), Err(Error::DegenerateColumn(ref c)) if c == "m"));
}

#[test]
fn seeds_give_different_partitions() {
    let a = split_rows(1000, 0.7, 1).unwrap();
    let b = split_rows(1000, 0.7, 2).unwrap();
    assert_ne!(a.train_rows, b.train_rows);
    assert_eq!(split_rows(10, 0.7, 1).unwrap().train_rows.len(), 7);
    assert!(matches!(split_rows(100, 1.0, 1), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn standardized_on_own_data(values in prop::collection::vec(-1e3f64..1e3, 3..60), shift in -50.0f64..50.0) {
        let n = values.len();
        let spread: Vec<f64> = values.iter().enumerate().map(|(i, v)| v + i as f64).collect();
        let s = Schema::new(vec![
            VariableSpec::new("y", Role::Outcome, Kind::Continuous),
            VariableSpec::new("f", Role::Focal, Kind::Continuous),
            VariableSpec::new("m", Role::Moderator, Kind::Ordinal),
        ]).unwrap();
        let ds = Dataset::from_columns(s, vec![
            Column::Numeric(spread.clone()),
            Column::Numeric(spread.iter().map(|v| v * 2.0 + shift).collect()),
            Column::Numeric(spread.iter().rev().copied().collect()),
        ]).unwrap();
        let plan = fit_preprocess(&ds).unwrap();
        let p = apply_preprocess(&plan, &ds).unwrap();
        for col in [p.outcome.clone(), p.focal.clone(), p.moderators.column(0).to_vec()] {
            prop_assert!(mean(&col).abs() < 1e-9);
            prop_assert!((variance(&col).sqrt() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(p.design_width(), 2);
        prop_assert_eq!(p.n_rows(), n);
    }

    #[test]
    fn split_is_a_partition(n in 10usize..2000, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let s = split_rows(n, ratio, seed).unwrap();
        let mut all: Vec<usize> = s.train_rows.iter().chain(&s.test_rows).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!((s.train_rows.len() as f64 / n as f64 - ratio).abs() <= 0.02 + 1.0 / n as f64);
        prop_assert_eq!(&s, &split_rows(n, ratio, seed).unwrap());
    }
}
