use proptest::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use spatial_diar::simulator::{render, DeviceSpec, Generator, SceneSpec, SourceSpec, Turn};

/// Delay of `b` relative to `a` in samples, from the phase of the
/// cross-spectrum scanned on a fine grid.
fn measured_delay(a: &[f64], b: &[f64], fs: f64, band: (f64, f64)) -> f64 {
    let n = a.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let spectrum = |x: &[f64]| {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.process(&mut buf);
        buf
    };
    let (fa, fb) = (spectrum(a), spectrum(b));
    let bins: Vec<usize> = (1..n / 2).filter(|&k| (band.0..band.1).contains(&(k as f64 * fs / n as f64))).collect();
    let cross: Vec<Complex<f64>> = bins.iter().map(|&k| fa[k] * fb[k].conj()).collect();
    let score = |tau: f64| -> f64 {
        bins.iter()
            .zip(&cross)
            .map(|(&k, c)| (c * Complex::from_polar(1.0, -std::f64::consts::TAU * k as f64 * tau / n as f64)).re)
            .sum()
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut tau = -10.0;
    while tau <= 10.0 {
        let s = score(tau);
        if s > best.0 {
            best = (s, tau);
        }
        tau += 0.005;
    }
    best.1
}

fn scene(source: [f64; 2], orientation_deg: f64) -> SceneSpec {
    SceneSpec {
        duration_s: 1.0,
        sample_rate_hz: 16_000,
        speed_of_sound: 343.0,
        snr_db: 60.0,
        clap_time_s: None,
        clap_db: 30.0,
        rt60_s: 0.0,
        sources: vec![SourceSpec {
            position_m: source,
            generator: Generator::ModulatedNoise {
                band_hz: (200.0, 5000.0),
                modulation_hz: 4.0,
            },
        }],
        devices: vec![DeviceSpec {
            position_m: [0.0, 0.0],
            orientation_deg,
            mic_spacing_m: 0.16,
            clock_offset_s: 0.0,
        }],
        turns: vec![Turn {
            start_s: 0.0,
            end_s: 1.0,
            source: 0,
        }],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rendered_delay_matches_geometry(r in 1.0..4.0f64, angle in 0.0..360.0f64, orientation in 0.0..360.0f64, seed in 0u64..1000) {
        let a = angle.to_radians();
        let spec = scene([r * a.cos(), r * a.sin()], orientation);
        let (recs, _) = render(&spec, seed).unwrap();
        let mid = 2000..14_000;
        let got = measured_delay(&recs[0].channel(0)[mid.clone()], &recs[0].channel(1)[mid], 16_000.0, (200.0, 5000.0));
        let want = spec.geometric_tdoa_samples(0, 0);
        prop_assert!((got - want).abs() <= 0.25, "measured {got}, geometry {want}");
    }
}

#[test]
fn endfire_delay_is_spacing_over_c() {
    let spec = scene([3.0, 0.0], 0.0);
    assert!(spec.true_angle_deg(0, 0).abs() < 1e-9);
    let (recs, _) = render(&spec, 1).unwrap();
    let got = measured_delay(&recs[0].channel(0)[2000..14_000], &recs[0].channel(1)[2000..14_000], 16_000.0, (200.0, 5000.0));
    let want = 0.16 / 343.0 * 16_000.0;
    assert!((got - want).abs() <= 0.1, "{got} vs {want}");
}
