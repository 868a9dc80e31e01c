use cellfree_core::allocation::baseline_weights;
use cellfree_core::beamforming::{assemble, build_blocks, Direction, Scheme, Uncertainty};
use cellfree_core::performance::{closed_form_terms, coupling, energy_efficiency, rate_genie, RateReport};
use cellfree_core::rng::TrialStreams;
use cellfree_core::scenario::Instance;
use cellfree_core::SystemConfig;

fn small() -> SystemConfig {
    SystemConfig { num_aps: 2, num_users: 3, num_paths: 2, pilot_len: 3, antennas_per_ap: 16, ..SystemConfig::default() }
}

#[test]
fn zero_forcing_cancels_interference_with_exact_components() {
    let cfg = small();
    for t in 0..10 {
        let inst = Instance::exact(&cfg, &TrialStreams::new(2, t)).unwrap();
        let unc = Uncertainty::zero(cfg.num_aps, cfg.num_users);
        for dir in [Direction::Downlink, Direction::Uplink] {
            let blocks = build_blocks(&inst.estimate, Scheme::Azf, dir, &unc, cfg.noise_var);
            assert!(blocks.ill_conditioned.iter().all(|f| !f));
            let bf = assemble(&blocks, &baseline_weights(&blocks, &inst.full_mask(), cfg.num_paths));
            for term in closed_form_terms(&coupling(&inst.estimate, &bf, &unc), &bf, cfg.noise_var) {
                assert!(term.interference <= 1e-18 * term.signal, "{term:?}");
            }
        }
    }
}

// Single link, single path: the closed form is log2(1 + x) with x the mean
// SNR, the genie averages log2(1 + x|α|²). At x ≈ 0.01 they differ by
// O(x²), well below the Monte-Carlo error of 10⁴ draws.
#[test]
fn genie_agrees_with_closed_form_at_low_snr() {
    let base = SystemConfig { num_aps: 1, num_users: 1, num_paths: 1, pilot_len: 1, antennas_per_ap: 8, ..SystemConfig::default() };
    let unc = Uncertainty::zero(1, 1);
    let streams = TrialStreams::new(4, 0);
    let inst = Instance::exact(&base, &streams).unwrap();
    let blocks = build_blocks(&inst.estimate, Scheme::Amf, Direction::Downlink, &unc, base.noise_var);
    let bf = assemble(&blocks, &baseline_weights(&blocks, &inst.full_mask(), 1));
    let x0 = inst.rates(&bf, &unc).sinr[0];
    let cfg = SystemConfig { noise_var: base.noise_var * x0 / 0.01, ..base };
    let inst = Instance { config: cfg.clone(), ..inst };
    let closed = inst.rates(&bf, &unc);
    assert!((closed.sinr[0] - 0.01).abs() < 1e-9);
    let genie = rate_genie(&inst.uplink, &bf, &cfg, 10_000, false, &streams);
    let gap = (closed.rate[0] - genie.rate[0]).abs();
    assert!(gap <= 3.0 * genie.stderr[0], "closed {} genie {} ± {}", closed.rate[0], genie.rate[0], genie.stderr[0]);
}

#[test]
fn throughput_applies_prelog() {
    let r = RateReport::from_sinr(Direction::Downlink, vec![1.0, 3.0], 0.75);
    assert_eq!(r.rate, vec![1.0, 2.0]);
    assert_eq!(r.throughput(), 0.75 * 3.0);
    assert_eq!(r.min_rate(), 1.0);
}

#[test]
fn energy_grows_with_circuit_power() {
    let cfg = small();
    let inst = Instance::exact(&cfg, &TrialStreams::new(5, 0)).unwrap();
    let unc = Uncertainty::zero(cfg.num_aps, cfg.num_users);
    let blocks = build_blocks(&inst.estimate, Scheme::Amf, Direction::Downlink, &unc, cfg.noise_var);
    let mask = inst.full_mask();
    let bf = assemble(&blocks, &baseline_weights(&blocks, &mask, cfg.num_paths));
    let rates = inst.rates(&bf, &unc);
    let mut last = 0.0;
    let mut last_ee = f64::INFINITY;
    for p0 in [0.0, 0.1, 0.2, 0.5] {
        let e = energy_efficiency(&rates, &bf, &mask, &SystemConfig { ee_circuit_power: p0, ..cfg.clone() });
        assert!(e.total_power > last && e.ee < last_ee);
        last = e.total_power;
        last_ee = e.ee;
    }
}
