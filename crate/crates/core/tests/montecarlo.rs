//! Link simulator checks: waveform contracts, receiver decomposition, noise and BER
//! oracles, reproducibility, and the sampling-rate study.

use std::sync::OnceLock;

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};
use uwblab::analytic::*;
use uwblab::channel::*;
use uwblab::montecarlo::*;
use uwblab::pulse::*;
use uwblab::rng::from_seed;

fn lower() -> &'static Synthesis {
    static S: OnceLock<Synthesis> = OnceLock::new();
    S.get_or_init(|| PulseDesign::for_band(Band::Lower).synthesize().unwrap())
}

fn unit_tap() -> ChannelRealization {
    ChannelRealization {
        clusters: vec![Cluster { arrival: 0.0, energy: 1.0, decay: 1.0 }],
        taps: vec![Tap { cluster: 0, delay: 0.0, amplitude: 1.0 }],
        seed: 0,
        params_hash: String::new(),
    }
}

/// Channel parameters whose realizations are, with overwhelming probability, the single
/// deterministic desired tap.
fn single_tap_params() -> ChannelParams {
    ChannelParams { max_excess_delay: 1e-9, ..ChannelParams::office_los() }
}

fn random_bits(n: usize, rng: &mut impl Rng) -> Vec<i8> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

#[test]
fn degenerate_code_and_histogram() {
    let c = SystemConfig { hop_cardinality: 1, ..Default::default() };
    assert_eq!(generate_th_code(&c, 0, &mut from_seed(1)).unwrap().hops, vec![1; 4]);

    let c = SystemConfig { pulses_per_bit: 1, hop_cardinality: 4, chip_time: 1.0, ..Default::default() };
    let mut rng = from_seed(2);
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[generate_th_code(&c, 0, &mut rng).unwrap().hops[0] - 1] += 1;
    }
    let p = 0.25;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for k in counts {
        assert!((k as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn code_generation_is_seeded_and_checked() {
    let c = SystemConfig::default();
    assert_eq!(generate_th_code(&c, 0, &mut from_seed(9)).unwrap(), generate_th_code(&c, 0, &mut from_seed(9)).unwrap());
    let bad = SystemConfig { hop_cardinality: 3, ..Default::default() };
    assert!(generate_th_code(&bad, 0, &mut from_seed(9)).is_err());
}

#[test]
fn transmit_waveform_contracts() {
    let p = &lower().pulse;
    let c = SystemConfig { pulse_energy: 2.5, ..Default::default() };
    let code = ThCode::new(0, vec![1, 2, 2, 1], &c).unwrap();
    let a = transmit_waveform(&code, 1, p, &c).unwrap();
    let b = transmit_waveform(&code, -1, p, &c).unwrap();
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(*x, -*y);
    }
    let e: f64 = a.samples.iter().map(|x| x * x).sum::<f64>() * a.dt;
    assert!((e / (4.0 * 2.5) - 1.0).abs() < 1e-6);

    let one = SystemConfig { pulses_per_bit: 1, ..Default::default() };
    let w = transmit_waveform(&ThCode::new(0, vec![0], &one).unwrap(), 1, p, &one).unwrap();
    for (k, x) in p.samples.iter().enumerate() {
        assert_eq!(w.samples[k], *x);
    }
}

#[test]
fn template_contracts() {
    let p = &lower().pulse;
    let c = SystemConfig::default();
    let code = ThCode::new(0, vec![2, 1, 1, 2], &c).unwrap();
    let v = receiver_template(&c, &code, p).unwrap();
    let self_corr: f64 = v.samples.iter().map(|x| x * x).sum::<f64>() * v.dt;
    assert!((self_corr - 4.0).abs() < 1e-9);
    let tx = transmit_waveform(&code, 1, p, &c).unwrap();
    for (k, x) in v.samples.iter().enumerate() {
        assert!((x - tx.samples[k]).abs() < 1e-15);
    }
    // A copy placed well past the pulse support correlates to zero.
    let engine = CorrelationEngine::new(p, &c, &code).unwrap();
    assert_eq!(engine.copy_correlation(2.0 * c.chip_time + 1.5), 0.0);
    assert!((engine.template_energy() - 4.0).abs() < 1e-9);
}

#[test]
fn identity_channel_reproduces_transmission() {
    let p = &lower().pulse;
    let c = SystemConfig::default();
    let code = ThCode::new(0, vec![1, 2, 1, 2], &c).unwrap();
    let history = 1;
    let link = UserLink { code: code.clone(), delay: 0.0, channel: unit_tap(), bits: vec![-1, 1] };
    let rx = received_signal(&[link], p, &c, 0.0, 0.0, history, &mut from_seed(0)).unwrap();
    let tx = transmit_waveform(&code, 1, p, &c).unwrap();
    for (k, x) in rx.total.iter().enumerate() {
        assert!((x - tx.samples[k]).abs() < 1e-15);
    }
    let v = receiver_template(&c, &code, p).unwrap();
    let d = correlate_decide(&rx, &v, 1).unwrap();
    assert!((d.z - 4.0).abs() < 1e-9);
    assert!(d.correct);
    assert_eq!(d.components.iasi, 0.0);
}

#[test]
fn awgn_sample_variance() {
    let p = &lower().pulse;
    let c = SystemConfig { data_rate_mbps: 0.11, ..Default::default() };
    let silent = ChannelRealization { taps: vec![Tap { cluster: 0, delay: 0.0, amplitude: 0.0 }], ..unit_tap() };
    let code = ThCode::new(0, vec![1; 4], &c).unwrap();
    let link = UserLink { code, delay: 0.0, channel: silent, bits: vec![1, 1] };
    let n0 = 0.3;
    let rx = received_signal(&[link], p, &c, 0.0, n0, 1, &mut from_seed(4)).unwrap();
    assert!(rx.total.len() >= 1_000_000);
    let var = rx.total.iter().map(|x| x * x).sum::<f64>() / rx.total.len() as f64;
    assert!((var / (n0 / (2.0 * p.dt)) - 1.0).abs() < 0.02);
}

#[test]
fn superposition_is_exact() {
    let p = &lower().pulse;
    let c = SystemConfig::default();
    let params = ChannelParams::office_los();
    let history = 8;
    let mut rng = from_seed(5);
    let links: Vec<UserLink> = (0..2)
        .map(|u| UserLink {
            code: generate_th_code(&c, u, &mut rng).unwrap(),
            delay: if u == 0 { 0.0 } else { 17.3 },
            channel: generate_realization(&params, 40 + u as u64).unwrap(),
            bits: random_bits(history + 1, &mut rng),
        })
        .collect();
    let both = received_signal(&links, p, &c, params.max_excess_delay, 0.0, history, &mut from_seed(0)).unwrap();
    let a = received_signal(&links[..1], p, &c, params.max_excess_delay, 0.0, history, &mut from_seed(0)).unwrap();
    let mut alone = links[1].clone();
    alone.delay = 17.3;
    // As the only link, user 1 is classified as desired/IASI/ISI; its total is the same.
    let b = received_signal(&[alone], p, &c, params.max_excess_delay, 0.0, history, &mut from_seed(0)).unwrap();
    for k in 0..both.total.len() {
        assert!((both.total[k] - a.total[k] - b.total[k]).abs() < 1e-12);
    }
}

#[test]
fn short_history_rejected() {
    let p = &lower().pulse;
    let c = SystemConfig::default();
    let link = UserLink { code: ThCode::new(0, vec![1; 4], &c).unwrap(), delay: 0.0, channel: unit_tap(), bits: vec![1, 1] };
    assert!(received_signal(&[link], p, &c, 250.0, 0.0, 1, &mut from_seed(0)).is_err());
}

#[test]
fn engine_matches_waveform_receiver() {
    let p = &lower().pulse;
    let params = ChannelParams::office_los();
    for (rate, users, seed) in [(27.24, 3, 1u64), (6.81, 2, 2), (27.24, 1, 3)] {
        let c = SystemConfig { data_rate_mbps: rate, users, ..Default::default() };
        let history = (params.max_excess_delay / c.symbol_time()).ceil() as usize + 1;
        let mut rng = from_seed(seed);
        let links: Vec<UserLink> = (0..users)
            .map(|u| UserLink {
                code: generate_th_code(&c, u, &mut rng).unwrap(),
                delay: if u == 0 { 0.0 } else { rng.random::<f64>() * c.symbol_time() },
                channel: generate_realization(&params, rng.random()).unwrap(),
                bits: random_bits(history + 1, &mut rng),
            })
            .collect();
        let rx = received_signal(&links, p, &c, params.max_excess_delay, 0.2, history, &mut rng).unwrap();
        let v = receiver_template(&c, &links[0].code, p).unwrap();
        let d = correlate_decide(&rx, &v, links[0].bits[history]).unwrap();
        let z = d.components;
        assert!((z.total() - d.z).abs() <= 1e-9 * d.z.abs().max(1e-3));

        let engine = CorrelationEngine::new(p, &c, &links[0].code).unwrap();
        let paths: Vec<_> = links.iter().map(|l| l.channel.paths()).collect();
        let views: Vec<LinkView> =
            links.iter().zip(&paths).map(|(l, ps)| LinkView { code: &l.code, delay: l.delay, paths: ps, bits: &l.bits }).collect();
        let e = engine.components(&views);
        let scale = z.desired.abs();
        for (a, b) in [(e.desired, z.desired), (e.iasi, z.iasi), (e.isi, z.isi), (e.mui, z.mui)] {
            assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn desired_energy_on_single_tap() {
    let p = &lower().pulse;
    let params = single_tap_params();
    let c = SystemConfig::default();
    let so = SimOptions { stop: StopRule { min_errors: u64::MAX, max_bits: 2_000 }, ..Default::default() };
    let e = simulate_point(&c, &params, p, 300.0, &so, 3, 0).unwrap();
    let eb = signal_energy(&c, &params);
    assert!((e.trials.second_moment()[0] / eb - 1.0).abs() < 0.02);
    assert_eq!(e.errors, 0);
}

#[test]
fn noise_variance_matches_closed_form() {
    let p = &lower().pulse;
    let params = ChannelParams::office_los();
    let c = SystemConfig::default();
    let snr = 5.0;
    let so = SimOptions { stop: StopRule { min_errors: u64::MAX, max_bits: 100_000 }, ..Default::default() };
    let e = simulate_point(&c, &params, p, snr, &so, 4, 0).unwrap();
    let want = noise_var(&c.at_snr_db(snr), &params);
    assert!((e.trials.variance()[1] / want - 1.0).abs() < 0.05);
}

#[test]
fn iasi_variance_matches_closed_form() {
    // Frame longer than the channel: no ISI and no cross-frame capture.
    let s = lower();
    let params = ChannelParams::office_los();
    let c = SystemConfig { data_rate_mbps: 0.11, ..Default::default() };
    let so = SimOptions { stop: StopRule { min_errors: u64::MAX, max_bits: 10_000 }, block_bits: 1, ..Default::default() };
    let e = simulate_point(&c, &params, &s.pulse, 300.0, &so, 9, 0).unwrap();
    let want = iasi_var(&c, &params, &autocorrelation(&s.pulse), &AnalyticOptions::default()).unwrap().value;
    let got = e.trials.second_moment()[2];
    assert!((got / want - 1.0).abs() < 0.10, "{got} vs {want}");
    assert_eq!(e.trials.second_moment()[3], 0.0);
}

#[test]
fn awgn_ber_matches_closed_form() {
    let p = &lower().pulse;
    let params = single_tap_params();
    let c = SystemConfig::default();
    let eb = signal_energy(&c, &params);
    // SNR giving BER = 1e-2 on a single tap: E_b/σ_n² = 2 erfc⁻¹(0.02)².
    let target_sinr = 2.0 * erfc_inv(0.02).powi(2);
    let n0 = eb / target_sinr * 2.0 / (params.reference_gain() * 4.0);
    let snr = 10.0 * (1.0 / n0).log10();
    let est = estimate_ber(&c, &params, p, &[snr], &SimOptions::default(), 21).unwrap();
    let e = est[0];
    assert!(e.errors >= 100);
    assert!((e.ber / 1e-2).log10().abs() < 3f64.log10(), "{}", e.ber);
    assert!(e.ci_lo <= 1e-2 && 1e-2 <= e.ci_hi * 1.5);

    // Well down the waterfall: analytic 1e-5, simulated below 1e-4.
    let target_sinr = 2.0 * erfc_inv(2e-5).powi(2);
    let n0 = eb / target_sinr * 2.0 / (params.reference_gain() * 4.0);
    let snr = 10.0 * (1.0 / n0).log10();
    let so = SimOptions { stop: StopRule { min_errors: 100, max_bits: 1_000_000 }, ..Default::default() };
    let e = simulate_point(&c, &params, p, snr, &so, 22, 0).unwrap();
    assert!(e.ber < 1e-4, "{}", e.ber);
    assert!(0.5 * erfc((target_sinr / 2.0).sqrt()) < 1.01e-5);
}

#[test]
fn ber_decreases_with_snr() {
    let p = &lower().pulse;
    let params = ChannelParams::office_los();
    let c = SystemConfig { data_rate_mbps: 6.81, ..Default::default() };
    let so = SimOptions { stop: StopRule { min_errors: 200, max_bits: 200_000 }, ..Default::default() };
    let est = estimate_ber(&c, &params, p, &[-5.0, 0.0, 5.0, 10.0], &so, 6).unwrap();
    for w in est.windows(2) {
        assert!(w[1].ci_lo <= w[0].ci_hi, "{:?}", (w[0].ber, w[1].ber));
    }
    assert!(est[3].ber < est[0].ber);
}

#[test]
fn seeded_runs_are_bit_exact_across_thread_counts() {
    let p = &lower().pulse;
    let params = ChannelParams::office_los();
    let c = SystemConfig { users: 3, ..Default::default() };
    let so = SimOptions { stop: StopRule { min_errors: 50, max_bits: 30_000 }, batch_blocks: 8, ..Default::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| estimate_ber(&c, &params, p, &[4.0, 12.0], &so, 77).unwrap())
    };
    let a = run(1);
    let b = run(3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.errors, x.bits), (y.errors, y.bits));
        assert_eq!(x.trials.sum, y.trials.sum);
    }
    let other = estimate_ber(&c, &params, p, &[4.0, 12.0], &so, 78).unwrap();
    assert_ne!(a[0].trials.sum, other[0].trials.sum);
}

#[test]
fn trial_moments_are_consistent() {
    let p = &lower().pulse;
    let c = SystemConfig { users: 2, ..Default::default() };
    let so = SimOptions { stop: StopRule { min_errors: 10, max_bits: 5_000 }, ..Default::default() };
    let e = simulate_point(&c, &ChannelParams::office_los(), p, 3.0, &so, 1, 0).unwrap();
    assert!(e.errors <= e.bits);
    let (m, s) = (e.trials.mean(), e.trials.second_moment());
    for i in 0..5 {
        assert!(s[i] + 1e-15 >= m[i] * m[i]);
    }
}

#[test]
fn csv_exports_have_headers() {
    let p = &lower().pulse;
    let so = SimOptions { stop: StopRule { min_errors: 10, max_bits: 1_000 }, ..Default::default() };
    let est = estimate_ber(&SystemConfig::default(), &ChannelParams::office_los(), p, &[0.0, 6.0], &so, 1).unwrap();
    let mut buf = Vec::new();
    uwblab::montecarlo::write_ber_csv(&mut buf, &est).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("snr_db,ber,ci_lo,ci_hi,errors,bits,seconds\n"));
    assert_eq!(text.lines().count(), 3);
    let mut buf = Vec::new();
    write_components_csv(&mut buf, &est).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
}

/// Continuous autocorrelation of Σ c_k g(t - ks) with Gaussian g:
/// ∫ g(t-a) g(t+τ-b) dt ∝ exp(-(τ + a - b)²/4σ²).
fn continuous_r<'a>(bank: &'a KernelBank, c: &'a [f64]) -> impl Fn(f64) -> f64 + 'a {
    let raw = move |tau: f64| {
        let mut s = 0.0;
        for (i, a) in c.iter().enumerate() {
            for (j, b) in c.iter().enumerate() {
                let d = tau + (i as f64 - j as f64) * bank.spacing;
                s += a * b * (-d * d / (4.0 * bank.sigma * bank.sigma)).exp();
            }
        }
        s
    };
    let r0 = raw(0.0);
    move |tau| raw(tau) / r0
}

#[test]
fn finer_sampling_tracks_continuous_receiver() {
    // Common channel realizations; compare the sampled-pulse interference terms with the
    // same terms computed from the exact continuous autocorrelation.
    let s = lower();
    let bank = PulseDesign::default().bank().unwrap();
    let rc = continuous_r(&bank, &s.coefficients);
    let params = ChannelParams::office_los();
    let c = SystemConfig { data_rate_mbps: 6.81, ..Default::default() };
    let history = (params.max_excess_delay / c.symbol_time()).ceil() as usize + 1;
    let mut rng = from_seed(31);
    type Trial = (ThCode, Vec<(f64, f64)>, Vec<i8>);
    let trials: Vec<Trial> = (0..200)
        .map(|_| {
            (
                generate_th_code(&c, 0, &mut rng).unwrap(),
                generate_realization(&params, rng.random()).unwrap().paths(),
                random_bits(history + 1, &mut rng),
            )
        })
        .collect();
    let exact: Vec<f64> = trials
        .iter()
        .map(|(code, paths, bits)| {
            let mut z = 0.0;
            for (m, &b) in bits.iter().enumerate() {
                let start = (m as f64 - history as f64) * c.symbol_time();
                for j in 0..c.pulses_per_bit {
                    let base = start + j as f64 * c.frame_time() + code.offset(j, c.chip_time);
                    for &(d, a) in paths.iter().skip(usize::from(m == history)) {
                        for jt in 0..c.pulses_per_bit {
                            let t = jt as f64 * c.frame_time() + code.offset(jt, c.chip_time);
                            z += b as f64 * a * rc(base + d - t);
                        }
                    }
                }
            }
            z
        })
        .collect();
    let mut gaps = Vec::new();
    for dt in [0.05, 0.02, 0.01, 0.005] {
        let pulse = bank.render_at(&s.coefficients, dt).unwrap().normalized();
        let mut sq = 0.0;
        for ((code, paths, bits), z_exact) in trials.iter().zip(&exact) {
            let engine = CorrelationEngine::new(&pulse, &c, code).unwrap();
            let z = engine.components(&[LinkView { code, delay: 0.0, paths, bits }]);
            sq += (z.iasi + z.isi - z_exact).powi(2);
        }
        gaps.push((sq / trials.len() as f64).sqrt());
    }
    for w in gaps.windows(2) {
        assert!(w[1] < w[0], "{gaps:?}");
    }
}
