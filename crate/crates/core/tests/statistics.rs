mod common;

use std::collections::BTreeMap;

use appearance_core::ratings::*;
use appearance_core::*;
use common::rated_dataset;
use proptest::prelude::*;

#[test]
fn ratings_csv_round_trip_at_full_study_size() {
    let ds = rated_dataset(1, 0.15);
    assert_eq!(ds.table.len(), 56_000);
    let mut buf = Vec::new();
    write_ratings(&ds.table, &mut buf).unwrap();
    let back = read_ratings(buf.as_slice()).unwrap();
    assert_eq!(back.records(), ds.table.records());
    assert_eq!(back.brdf_ids().len(), 400);
}

#[test]
fn header_only_file_is_an_empty_table() {
    let t = read_ratings("brdf_id,participant_id,attribute,rating\n".as_bytes()).unwrap();
    assert!(t.is_empty());
}

#[test]
fn csv_errors_carry_their_kind() {
    let bad_header = "brdf,participant_id,attribute,rating\nm,p,Glossy,3\n";
    assert!(matches!(read_ratings(bad_header.as_bytes()), Err(Error::Schema(_))));
    let bad_attr = "brdf_id,participant_id,attribute,rating\nm,p,Shiny,3\n";
    assert!(matches!(read_ratings(bad_attr.as_bytes()), Err(Error::Schema(_))));
    let out_of_range = "brdf_id,participant_id,attribute,rating\nm,p,Glossy,3\nm,q,Glossy,6\n";
    match read_ratings(out_of_range.as_bytes()) {
        Err(Error::Row { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let not_int = "brdf_id,participant_id,attribute,rating\nm,p,glossy,2.5\n";
    assert!(matches!(read_ratings(not_int.as_bytes()), Err(Error::Row { line: 2, .. })));
}

#[test]
fn mos_and_variance_follow_the_normalized_scale() {
    let rec = |p: &str, r: u8| RatingRecord { brdf_id: "m".into(), participant_id: p.into(), attribute: Attribute::Soft, rating: r };
    let table = RatingsTable::new(vec![rec("a", 1), rec("b", 5), rec("c", 4), rec("d", 2)]).unwrap();
    // Normalized: 0, 1, 0.75, 0.25.
    assert_eq!(table.mos("m", Attribute::Soft).unwrap(), 0.5);
    assert!((table.rating_variance("m", Attribute::Soft).unwrap() - 0.15625).abs() < 1e-15);
    assert!(matches!(table.mos("m", Attribute::Hard), Err(Error::MissingData(_))));
}

#[test]
fn p_values_match_reference_values() {
    // Two-sided Student t tail probabilities from an independent statistics package.
    for (r, n, p) in [(0.5, 10, 0.14111328125000003), (-0.3, 40, 0.06000178954876174), (0.9, 5, 0.03738607346849863)] {
        assert!((correlation_p_value(r, n) - p).abs() < 1e-10, "{r} {n}");
    }
    assert_eq!(correlation_p_value(1.0, 10), 0.0);
    assert!(correlation_p_value(0.2, 2).is_nan());
}

#[test]
fn bands_follow_thresholds() {
    assert_eq!(CorrelationBand::classify(0.95, 0.2), CorrelationBand::NotSignificant);
    assert_eq!(CorrelationBand::classify(-0.85, 0.001), CorrelationBand::VeryStrong);
    assert_eq!(CorrelationBand::classify(0.75, 0.01), CorrelationBand::Strong);
    assert_eq!(CorrelationBand::classify(0.7, 0.01), CorrelationBand::Weak);
}

#[test]
fn quartiles_match_reference_values() {
    let s = BoxStats::from_sample(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]).unwrap();
    assert_eq!((s.q1, s.median, s.q3, s.iqr), (1.75, 3.5, 5.25, 3.5));
    assert_eq!((s.min, s.max, s.mean), (1.0, 9.0, 3.875));
    assert!(BoxStats::from_sample(&[]).is_none());
}

#[test]
fn correlated_attributes_land_in_the_expected_band() {
    let ds = rated_dataset(2, 0.15);
    let report = correlation_matrix(&ds.table).unwrap();
    // The oracle here is the hidden truth itself.
    let truth = |a: Attribute| -> Vec<f64> { ds.truth.iter().map(|t| t[a.index()]).collect() };
    for (a, b) in [(Attribute::Glossy, Attribute::Matte), (Attribute::Soft, Attribute::Hard), (Attribute::Bright, Attribute::Rough)] {
        let r_true = pearson(&truth(a), &truth(b));
        let r = report.pearson[a.index()][b.index()];
        assert!((r - r_true).abs() < 0.1, "{a} {b}: {r} vs {r_true}");
        assert_eq!(r.signum(), r_true.signum());
        assert_eq!(report.pairs[a.index()][b.index()], 400);
    }
    let mut csv = Vec::new();
    write_correlation_csv(&report, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 15);
}

#[test]
fn too_few_shared_materials_is_missing_data() {
    let rec = |b: &str, a: Attribute| RatingRecord { brdf_id: b.into(), participant_id: "p".into(), attribute: a, rating: 3 };
    let table = RatingsTable::new(vec![rec("x", Attribute::Soft), rec("y", Attribute::Soft)]).unwrap();
    assert!(matches!(correlation_matrix(&table), Err(Error::MissingData(_))));
}

#[test]
fn cluster_statistics_group_by_membership() {
    let ds = rated_dataset(3, 0.15);
    let clusters: BTreeMap<String, Cluster> = ds
        .ids
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 2 == 0)
        .map(|(i, id)| (id.clone(), if i % 4 == 0 { Cluster::Fabric } else { Cluster::Metallic }))
        .collect();
    let stats = cluster_stats(&ds.table, &clusters);
    assert_eq!(stats.len(), 2 * ATTRIBUTE_COUNT);
    let fabric_soft = stats.iter().find(|s| s.cluster == Cluster::Fabric && s.attribute == Attribute::Soft).unwrap();
    assert_eq!(fabric_soft.materials, 100);
    let members: Vec<f64> = clusters
        .iter()
        .filter(|(_, c)| **c == Cluster::Fabric)
        .map(|(id, _)| ds.table.mos(id, Attribute::Soft).unwrap())
        .collect();
    let mean = members.iter().sum::<f64>() / members.len() as f64;
    assert!((fabric_soft.score.mean - mean).abs() < 1e-12);

    let parsed = read_clusters("brdf_id,cluster\na,Metallic Paint\nb,fabric\n".as_bytes()).unwrap();
    assert_eq!(parsed["a"], Cluster::MetallicPaint);
    assert!(read_clusters("brdf_id,cluster\na,wood\n".as_bytes()).is_err());
}

proptest! {
    #[test]
    fn correlations_are_bounded_and_symmetric(
        xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        for f in [pearson, spearman] {
            let r = f(&x, &y);
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert_eq!(r, f(&y, &x));
        }
        let shifted: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        prop_assert!((spearman(&x, &shifted) - 1.0).abs() < 1e-12 || x.iter().all(|v| *v == x[0]));
    }

    #[test]
    fn ranks_sum_to_the_triangular_number(x in prop::collection::vec(0u8..6, 1..50)) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let n = x.len() as f64;
        prop_assert!((ranks(&x).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }
}
