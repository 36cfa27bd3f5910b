mod common;

use appearance_core::*;
use common::{random_brdfs, Params};
use nalgebra::Vector3;
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;

fn header(h: i32, d: i32, p: i32) -> Vec<u8> {
    [h, d, p].iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[test]
fn malformed_merl_files_are_format_errors() {
    assert!(matches!(Brdf::from_merl_bytes(&[0; 5]), Err(Error::Format(_))));
    assert!(matches!(Brdf::from_merl_bytes(&header(90, 90, 90)), Err(Error::Format(_))));
    assert!(matches!(Brdf::from_merl_bytes(&header(0, 90, 180)), Err(Error::Format(_))));
    assert!(matches!(Brdf::from_merl_bytes(&header(-2, 90, 180)), Err(Error::Format(_))));
    let mut short = header(90, 90, 180);
    short.extend_from_slice(&[0; 64]);
    assert!(matches!(Brdf::from_merl_bytes(&short), Err(Error::Format(_))));

    let mut nan = header(90, 90, 180);
    nan.extend(std::iter::repeat_n(0.25f64.to_le_bytes(), Dims::MERL.bins() * 3).flatten());
    nan[12..20].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(Brdf::from_merl_bytes(&nan), Err(Error::Format(_))));
}

#[test]
fn reduced_resolution_files_carry_their_dims() {
    let small = random_brdfs(1, common::small_dims(), 1).pop().unwrap();
    let bytes = small.to_merl_bytes().unwrap();
    assert_eq!(&bytes[..12], header(16, 16, 32).as_slice());
    assert_eq!(Brdf::from_merl_bytes(&bytes).unwrap(), small);
    let lum = Brdf::zeros(common::small_dims(), ChannelLayout::Luminance);
    assert!(matches!(lum.to_merl_bytes(), Err(Error::Argument(_))));
}

#[test]
fn file_round_trip_keeps_physical_values_and_sentinels() {
    let dims = Dims::MERL;
    let p = Params { diffuse: [0.2, 0.3, 0.4], specular: [1.0; 3], roughness: 0.1, fresnel: 1.0, sheen: 0.1 };
    let b = Brdf::from_fn(dims, ChannelLayout::Rgb, |ch, bin| {
        let c = dims.bin_center(bin);
        (bin % 1000 != 7).then(|| p.value(ch, c.theta_h, c.theta_d))
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.binary");
    b.write_merl(&path).unwrap();
    let back = Brdf::read_merl(&path).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.value(2, 7), None);
    assert_eq!(back.stored()[2 * dims.bins() + 7], -1.0);
    let v = back.value(1, 8).unwrap();
    let c = dims.bin_center(8);
    assert!((v - p.value(1, c.theta_h, c.theta_d)).abs() <= 1e-15 * v.abs().max(1.0));
}

#[test]
fn negative_stored_values_become_invalid() {
    let dims = Dims::new(1, 1, 4).unwrap();
    let b = Brdf::from_stored(dims, ChannelLayout::Luminance, vec![1.0, -3.0, 0.0, -1.0]).unwrap();
    assert_eq!(b.invalid_count(), 2);
    assert_eq!(b.stored(), &[1.0, -1.0, 0.0, -1.0]);
}

#[test]
fn mapping_a_reference_gives_zero_and_weights_floor() {
    let dims = Dims::new(6, 6, 8).unwrap();
    let set = random_brdfs(5, dims, 4);
    let (lum, _) = chroma::split_achromatic(&set[0]).unwrap();
    let reference = compute_reference(std::slice::from_ref(&lum)).unwrap();
    assert!(map_brdf(&lum, &reference).unwrap().values().iter().all(|&v| v.abs() < 1e-15));
    assert!(reference.weights().iter().all(|&w| (1e-3..=1.0).contains(&w)));
    // A luminance reference maps every colour channel.
    assert_eq!(map_brdf(&set[1], &reference).unwrap().channels(), 3);
}

#[test]
fn reference_is_the_per_bin_median() {
    let dims = Dims::new(1, 2, 2).unwrap();
    let vals = [[0.1, 0.5, 0.2, 0.0], [0.3, 0.1, 0.9, 0.4], [0.2, 0.2, 0.1, 0.8]];
    let set: Vec<Brdf> =
        vals.iter().map(|v| Brdf::from_fn(dims, ChannelLayout::Luminance, |_, bin| Some(v[bin]))).collect();
    let r = compute_reference(&set).unwrap();
    let med: Vec<f64> = (0..4).map(|bin| r.median().value(0, bin).unwrap()).collect();
    let expect = [0.2, 0.2, 0.2, 0.4];
    assert!(med.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15), "{med:?}");
}

fn unit_upper(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_map_inverts(seed in 0u64..1000, eps in 1e-6f64..1e-2) {
        let dims = Dims::new(4, 6, 8).unwrap();
        let set = random_brdfs(3, dims, seed);
        let reference = logmap::compute_reference_with(&set, eps, 1e-3).unwrap();
        for b in &set {
            let back = unmap_brdf(&map_brdf(b, &reference).unwrap(), &reference).unwrap();
            for ch in 0..3 {
                for bin in 0..dims.bins() {
                    let (x, y) = (b.value(ch, bin).unwrap(), back.value(ch, bin).unwrap());
                    prop_assert!((x - y).abs() <= 1e-9 * x.max(1e-300));
                }
            }
        }
    }

    #[test]
    fn half_difference_angles_are_reciprocal_and_in_range(
        ti in 0.0f64..1.5, pi in -3.1f64..3.1, to in 0.0f64..1.5, po in -3.1f64..3.1,
    ) {
        let (wi, wo) = (unit_upper(ti, pi), unit_upper(to, po));
        let a = dirs_to_halfdiff(wi, wo).unwrap();
        let b = dirs_to_halfdiff(wo, wi).unwrap();
        prop_assert!((a.theta_h - b.theta_h).abs() < 1e-9);
        prop_assert!((a.theta_d - b.theta_d).abs() < 1e-9);
        prop_assert!((0.0..=FRAC_PI_2 + 1e-9).contains(&a.theta_h));
        prop_assert!((0.0..=FRAC_PI_2 + 1e-9).contains(&a.theta_d));
        prop_assert!((0.0..std::f64::consts::PI).contains(&a.phi_d));
        // The difference angle is half the angle between the directions.
        prop_assert!((2.0 * a.theta_d - wi.dot(&wo).clamp(-1.0, 1.0).acos()).abs() < 1e-9);
    }
}

#[test]
fn mirror_configuration_has_zero_half_angle() {
    let wi = unit_upper(0.7, 0.3);
    let wo = unit_upper(0.7, 0.3 + std::f64::consts::PI);
    let c = dirs_to_halfdiff(wi, wo).unwrap();
    assert!(c.theta_h.abs() < 1e-7 && (c.theta_d - 0.7).abs() < 1e-12);
    assert!(dirs_to_halfdiff(Vector3::new(0.0, 0.0, -1.0), Vector3::z()).is_err());
}
