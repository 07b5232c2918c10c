mod common;

use varfast::{clip_entries, flatten, inf_norm_diff, pyramid_up, reshape_to_pyramid, up_interpolate};
use varfast::{Error, FlatMatrix, KernelChoice, PyramidSchedule, Rng, TokenMap};

#[test]
fn pyramid_of_three_scales_flattens_to_21_rows() {
    let mut rng = Rng::new(1);
    let maps: Vec<TokenMap> = [1, 2, 4].iter().map(|&s| TokenMap::random(s, s, 3, 1.0, &mut rng)).collect();
    let m = flatten(&maps).unwrap();
    assert_eq!(m.shape(), (21, 3));
    assert_eq!(&m.data()[..3], maps[0].data());
    assert_eq!(&m.data()[3 * 5..3 * 21], maps[2].data());
    let schedule = PyramidSchedule::new(2, 3).unwrap();
    let back = reshape_to_pyramid(&m, &schedule, 3).unwrap();
    assert_eq!(back, maps);
}

#[test]
fn mixed_sizes_round_trip() {
    let mut rng = Rng::new(2);
    let maps = vec![TokenMap::random(2, 3, 2, 1.0, &mut rng), TokenMap::random(1, 1, 2, 1.0, &mut rng)];
    let m = flatten(&maps).unwrap();
    assert_eq!(m.shape(), (7, 2));
    let data: Vec<f64> = maps.iter().flat_map(|t| t.data().to_vec()).collect();
    assert_eq!(m.data(), &data[..]);
}

#[test]
fn reshape_rejects_wrong_row_count() {
    let schedule = PyramidSchedule::new(2, 3).unwrap();
    let m = FlatMatrix::zeros(20, 2);
    assert!(matches!(reshape_to_pyramid(&m, &schedule, 3), Err(Error::DimensionMismatch(_))));
    let one = reshape_to_pyramid(&FlatMatrix::zeros(1, 4), &schedule, 1).unwrap();
    assert_eq!(one[0].shape(), (1, 1, 4));
}

#[test]
fn inf_norm_diff_matches_scan() {
    let mut rng = Rng::new(3);
    for _ in 0..50 {
        let a = FlatMatrix::random(7, 3, 2.0, &mut rng);
        let b = FlatMatrix::random(7, 3, 2.0, &mut rng);
        let d = inf_norm_diff(&a, &b).unwrap();
        assert_eq!(d, common::max_abs_diff(a.data(), b.data()));
        assert_eq!(d, inf_norm_diff(&b, &a).unwrap());
    }
}

#[test]
fn clipping_bounds_every_entry() {
    let mut rng = Rng::new(4);
    let m = FlatMatrix::random(9, 4, 5.0, &mut rng);
    let c = clip_entries(&m, 1.5);
    assert!(c.data().iter().all(|v| v.abs() <= 1.5));
    for (x, y) in m.data().iter().zip(c.data()) {
        if x.abs() <= 1.5 {
            assert_eq!(x, y);
        }
    }
}

#[test]
fn interpolation_matches_neighbourhood_oracle() {
    let x = TokenMap::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let y = up_interpolate(&x, 4, 4, KernelChoice::CubicBSpline).unwrap();
    assert!(inf_norm_diff(&y, &common::interp(&x, 4, 4)).unwrap() < 1e-14);

    let mut rng = Rng::new(5);
    for _ in 0..40 {
        let (h, w) = (1 + rng.below(5), 1 + rng.below(5));
        let (th, tw) = (h + rng.below(7), w + rng.below(7));
        let x = TokenMap::random(h, w, 2, 1.0, &mut rng);
        let y = up_interpolate(&x, th, tw, KernelChoice::CubicBSpline).unwrap();
        assert!(inf_norm_diff(&y, &common::interp(&x, th, tw)).unwrap() < 1e-13);
    }
}

#[test]
fn pyramid_up_matches_oracle_per_scale() {
    let schedule = PyramidSchedule::new(2, 4).unwrap();
    let mut rng = Rng::new(6);
    let x_init = TokenMap::random(1, 1, 3, 1.0, &mut rng);
    let maps: Vec<TokenMap> = (0..3).map(|r| {
        let s = schedule.side(r);
        TokenMap::random(s, s, 3, 1.0, &mut rng)
    }).collect();
    let ys = pyramid_up(&x_init, &maps, &schedule, KernelChoice::CubicBSpline).unwrap();
    assert_eq!(ys.len(), 4);
    assert_eq!(ys[0], x_init);
    for (r, m) in maps.iter().enumerate() {
        let t = schedule.side(r + 1);
        assert!(inf_norm_diff(&ys[r + 1], &common::interp(m, t, t)).unwrap() < 1e-13);
    }
    let sizes: Vec<usize> = pyramid_up(&x_init, &maps[..2], &schedule, KernelChoice::CubicBSpline)
        .unwrap()
        .iter()
        .map(|m| m.height())
        .collect();
    assert_eq!(sizes, vec![1, 2, 4]);
}

#[test]
fn single_step_broadcasts_constant_token() {
    let schedule = PyramidSchedule::new(2, 2).unwrap();
    let x_init = TokenMap::new(1, 1, 2, vec![0.3, -0.1]).unwrap();
    let x1 = TokenMap::new(1, 1, 2, vec![0.7, 0.2]).unwrap();
    let ys = pyramid_up(&x_init, std::slice::from_ref(&x1), &schedule, KernelChoice::CubicBSpline).unwrap();
    let expect = TokenMap::from_fn(2, 2, 2, |_, _, c| x1.get(0, 0, c));
    assert!(inf_norm_diff(&ys[1], &expect).unwrap() < 1e-15);
}

#[test]
fn up_interpolation_is_non_expansive_over_many_pairs() {
    let mut rng = Rng::new(7);
    let mut violations = 0;
    for _ in 0..1000 {
        let (h, w) = (1 + rng.below(5), 1 + rng.below(5));
        let (th, tw) = (h + rng.below(8), w + rng.below(8));
        let a = TokenMap::random(h, w, 2, 1.0, &mut rng);
        let b = TokenMap::random(h, w, 2, 1.0, &mut rng);
        let lhs = inf_norm_diff(
            &up_interpolate(&a, th, tw, KernelChoice::CubicBSpline).unwrap(),
            &up_interpolate(&b, th, tw, KernelChoice::CubicBSpline).unwrap(),
        )
        .unwrap();
        if lhs > inf_norm_diff(&a, &b).unwrap() * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn catmull_rom_can_overshoot() {
    let x = TokenMap::new(1, 4, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    let y = up_interpolate(&x, 1, 16, KernelChoice::CatmullRom).unwrap();
    let (lo, hi) = y.data().iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(lo < 0.0 || hi > 1.0);
    let z = up_interpolate(&x, 1, 16, KernelChoice::CubicBSpline).unwrap();
    assert!(z.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}
