mod common;

use proptest::prelude::*;

use textdeblur_core::raster::{convolve2d, correlate2d, to_grayscale, BorderPolicy, Kernel, Raster, RasterError};

const POLICIES: [BorderPolicy; 3] = [BorderPolicy::Replicate, BorderPolicy::Reflect, BorderPolicy::ZeroPad];

/// Sliding-window convolution with the border resolved by explicit padding.
fn padded_oracle(img: &Raster, k: &Kernel, border: BorderPolicy) -> Raster {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (cx, cy) = ((k.kw() / 2) as isize, (k.kh() / 2) as isize);
    let fetch = |x: isize, y: isize| -> f64 {
        let clamp = |i: isize, n: isize| i.clamp(0, n - 1);
        let mirror = |mut i: isize, n: isize| {
            loop {
                if i < 0 {
                    i = -i - 1;
                } else if i >= n {
                    i = 2 * n - i - 1;
                } else {
                    return i;
                }
            }
        };
        match border {
            BorderPolicy::ZeroPad if x < 0 || y < 0 || x >= w || y >= h => 0.0,
            BorderPolicy::ZeroPad => img.get(x as usize, y as usize),
            BorderPolicy::Replicate => img.get(clamp(x, w) as usize, clamp(y, h) as usize),
            BorderPolicy::Reflect => img.get(mirror(x, w) as usize, mirror(y, h) as usize),
        }
    };
    Raster::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for v in 0..k.kh() {
            for u in 0..k.kw() {
                acc += k.get(u, v) * fetch(x as isize - u as isize + cx, y as isize - v as isize + cy);
            }
        }
        acc
    })
    .unwrap()
}

fn raster_strategy(max: usize) -> impl Strategy<Value = Raster> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        proptest::collection::vec(-1.0f64..2.0, w * h).prop_map(move |s| Raster::new(w, h, s).unwrap())
    })
}

fn kernel_strategy() -> impl Strategy<Value = Kernel> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(kw, kh)| {
        proptest::collection::vec(-1.0f64..1.0, kw * kh).prop_map(move |w| Kernel::new(kw, kh, w).unwrap())
    })
}

fn policy_strategy() -> impl Strategy<Value = BorderPolicy> {
    prop_oneof![
        Just(BorderPolicy::Replicate),
        Just(BorderPolicy::Reflect),
        Just(BorderPolicy::ZeroPad)
    ]
}

#[test]
fn luma_of_two_pixel_image() {
    let r = Raster::new(2, 1, vec![1.0, 0.0]).unwrap();
    let g = Raster::new(2, 1, vec![0.0, 1.0]).unwrap();
    let b = Raster::new(2, 1, vec![0.0, 0.0]).unwrap();
    let y = to_grayscale(&r, &g, &b).unwrap();
    assert!((y.get(0, 0) - 0.299).abs() < 1e-15);
    assert!((y.get(1, 0) - 0.587).abs() < 1e-15);
}

#[test]
fn luma_constant_and_red() {
    let half = Raster::filled(3, 2, 0.5).unwrap();
    let y = to_grayscale(&half, &half, &half).unwrap();
    assert!(y.samples().iter().all(|v| (v - 0.5).abs() < 1e-15));
    let one = Raster::filled(3, 2, 1.0).unwrap();
    let zero = Raster::filled(3, 2, 0.0).unwrap();
    let y = to_grayscale(&one, &zero, &zero).unwrap();
    assert!(y.samples().iter().all(|v| (v - 0.299).abs() < 1e-15));
}

#[test]
fn luma_rejects_mismatched_channels() {
    let a = Raster::filled(2, 2, 0.0).unwrap();
    let b = Raster::filled(2, 3, 0.0).unwrap();
    assert!(matches!(to_grayscale(&a, &a, &b), Err(RasterError::DimensionMismatch { .. })));
}

#[test]
fn centered_impulse_under_box_matches_oracle() {
    let img = Raster::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 1.0 } else { 0.0 }).unwrap();
    let k = Kernel::new(3, 3, vec![1.0; 9]).unwrap();
    let out = convolve2d(&img, &k, BorderPolicy::ZeroPad).unwrap();
    assert_eq!(out.samples(), padded_oracle(&img, &k, BorderPolicy::ZeroPad).samples());
    assert!(out.samples().iter().all(|&v| v == 1.0));
}

#[test]
fn correlate_ramp_with_difference_kernel() {
    let img = Raster::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
    let k = Kernel::new(2, 1, vec![1.0, -1.0]).unwrap();
    let got = correlate2d(&img, &k, BorderPolicy::Replicate).unwrap();
    let want = padded_oracle(&img, &k.flip180(), BorderPolicy::Replicate);
    assert_eq!(got.samples(), want.samples());
    assert_eq!(got.samples(), &[-1.0, -1.0, 0.0]);
}

#[test]
fn correlate_vs_convolve_two_tap() {
    let mut r = common::rng(5);
    let img = common::random_raster(&mut r, 6, 4);
    let a = correlate2d(&img, &Kernel::new(2, 1, vec![1.0, 0.0]).unwrap(), BorderPolicy::Replicate).unwrap();
    let b = convolve2d(&img, &Kernel::new(2, 1, vec![0.0, 1.0]).unwrap(), BorderPolicy::Replicate).unwrap();
    assert_eq!(a.samples(), b.samples());
}

#[test]
fn reflect_rejects_oversized_kernel() {
    let img = Raster::filled(2, 2, 1.0).unwrap();
    let k = Kernel::box_blur(5, 1).unwrap();
    assert!(matches!(
        convolve2d(&img, &k, BorderPolicy::Reflect),
        Err(RasterError::KernelTooLarge { .. })
    ));
    assert!(convolve2d(&img, &k, BorderPolicy::Replicate).is_ok());
}

proptest! {
    #[test]
    fn matches_padded_oracle(img in raster_strategy(9), k in kernel_strategy(), border in policy_strategy()) {
        prop_assume!(border != BorderPolicy::Reflect || (k.kw() <= 2 * img.width() && k.kh() <= 2 * img.height()));
        let got = convolve2d(&img, &k, border).unwrap();
        let want = padded_oracle(&img, &k, border);
        prop_assert_eq!(got.width(), img.width());
        prop_assert_eq!(got.height(), img.height());
        for (a, b) in got.samples().iter().zip(want.samples()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn linearity(
        (x, y) in (1usize..9, 1usize..9).prop_flat_map(|(w, h)| (
            proptest::collection::vec(-1.0f64..1.0, w * h).prop_map(move |s| Raster::new(w, h, s).unwrap()),
            proptest::collection::vec(-1.0f64..1.0, w * h).prop_map(move |s| Raster::new(w, h, s).unwrap()),
        )),
        k in kernel_strategy(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let combo = Raster::from_fn(x.width(), x.height(), |i, j| a * x.get(i, j) + b * y.get(i, j)).unwrap();
        let lhs = convolve2d(&combo, &k, BorderPolicy::Replicate).unwrap();
        let cx = convolve2d(&x, &k, BorderPolicy::Replicate).unwrap();
        let cy = convolve2d(&y, &k, BorderPolicy::Replicate).unwrap();
        for (i, l) in lhs.samples().iter().enumerate() {
            let r = a * cx.samples()[i] + b * cy.samples()[i];
            let scale = l.abs().max(r.abs()).max(1.0);
            prop_assert!((l - r).abs() <= 1e-12 * scale, "{} vs {}", l, r);
        }
    }

    #[test]
    fn flip_relation_is_exact(img in raster_strategy(8), k in kernel_strategy(), border in policy_strategy()) {
        prop_assume!(border != BorderPolicy::Reflect || (k.kw() <= 2 * img.width() && k.kh() <= 2 * img.height()));
        let a = convolve2d(&img, &k.flip180(), border).unwrap();
        let b = correlate2d(&img, &k, border).unwrap();
        prop_assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn interior_agrees_across_policies(img in raster_strategy(12), k in kernel_strategy()) {
        let outs: Vec<Raster> = POLICIES.iter().map(|&p| convolve2d(&img, &k, p)).collect::<Result<_, _>>().unwrap_or_default();
        prop_assume!(outs.len() == 3);
        let (rx, ry) = (k.kw(), k.kh());
        for y in ry..img.height().saturating_sub(ry) {
            for x in rx..img.width().saturating_sub(rx) {
                let v = outs[0].get(x, y).to_bits();
                prop_assert_eq!(v, outs[1].get(x, y).to_bits());
                prop_assert_eq!(v, outs[2].get(x, y).to_bits());
            }
        }
    }

    #[test]
    fn constant_image_scales_by_kernel_sum(w in 1usize..8, h in 1usize..8, c in -2.0f64..2.0, k in kernel_strategy()) {
        let img = Raster::filled(w, h, c).unwrap();
        let out = convolve2d(&img, &k, BorderPolicy::Replicate).unwrap();
        for v in out.samples() {
            prop_assert!((v - c * k.sum()).abs() <= 1e-12);
        }
    }

    #[test]
    fn identity_kernel_is_a_no_op(img in raster_strategy(8), border in policy_strategy()) {
        let out = convolve2d(&img, &Kernel::identity(), border).unwrap();
        prop_assert_eq!(out.samples(), img.samples());
    }
}
