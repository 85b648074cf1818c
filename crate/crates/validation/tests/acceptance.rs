//! End-to-end acceptance checks. Each check prints one `[PASS]`/`[FAIL]`
//! line with the measured numbers; the run fails if any check does.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mmwave_noma::allocation::{
    alternating_optimize, brute_force_alloc_oracle, joint_power_gain_2user, AllocUser, AllocationProblem,
    AlternatingOptions, GainBudget,
};
use mmwave_noma::array::{gain_integral, ArrayGeometry, Awv, ChannelState, Direction};
use mmwave_noma::design::{
    cm_optimize_multibeam, exhaustive_cm_oracle, subarray_multibeam, BeamTarget, CmOptions, Designer,
};
use mmwave_noma::hybrid::{mode1_evaluate, mode2_evaluate, HybridConfig, Precoder, RfChainPlan};
use mmwave_noma::pairing::{
    angle_merge, evaluate_plan, exhaustive_pairing, strong_weak_heuristic, BeamForming, BeamModel, PairingInstance,
    PowerPolicy,
};
use mmwave_noma::rate::{noma_rates, NomaGroup, NomaMember};
use mmwave_noma_cli::{hybrid_chains, sweep_beta, sweep_gain, sweep_snr, Command, ScenarioConfig};

fn report(label: &str, ok: bool, detail: impl AsRef<str>) {
    println!("[{}] {label}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect()
}

fn dir(phi: f64) -> Direction {
    Direction::new(phi).unwrap()
}

fn single_beam_noma_against_tdma_over_snr() -> bool {
    let start = Instant::now();
    let mut cfg = ScenarioConfig::preset(Command::SweepSnr);
    cfg.beam_widths = vec![1.0, 8.0];
    let table = rows(&sweep_snr(&cfg).unwrap());
    let elapsed = start.elapsed();

    let narrow: Vec<&Vec<f64>> = table.iter().filter(|r| r[1] == 1.0).collect();
    let wide: Vec<&Vec<f64>> = table.iter().filter(|r| r[1] == 8.0).collect();
    assert_eq!(narrow.len(), 16);
    let narrow_wins = narrow.iter().all(|r| r[2] > r[3]);
    let min_margin = narrow.iter().map(|r| r[2] - r[3]).fold(f64::INFINITY, f64::min);
    // smallest SNR from which the wide beam loses at every later point
    let threshold = (0..wide.len()).find(|&i| wide[i..].iter().all(|r| r[2] < r[3])).map(|i| wide[i][0]);
    let ok = narrow_wins && threshold.is_some() && elapsed < Duration::from_secs(1);
    report(
        "single-beam NOMA vs TDMA over SNR",
        ok,
        format!("B=2/N min margin {min_margin:.4}; B=16/N below TDMA from {threshold:?} dB; {elapsed:?}"),
    );
    ok
}

fn multi_beam_noma_against_tdma_over_beta() -> bool {
    let start = Instant::now();
    let cfg = ScenarioConfig::preset(Command::SweepBeta);
    let table = rows(&sweep_beta(&cfg).unwrap());
    let elapsed = start.elapsed();

    let betas: Vec<f64> = table.iter().map(|r| r[0]).collect();
    assert_eq!(betas, vec![1.0, 2.0, 4.0, 8.0]);
    let gaps: Vec<f64> = table.iter().map(|r| r[1] - r[2]).collect();
    let noma_never_worse = gaps.iter().all(|g| *g >= 0.0);
    let gap_increasing = gaps.windows(2).all(|w| w[1] > w[0]);
    let ok = noma_never_worse && gap_increasing && elapsed < Duration::from_secs(1);
    report(
        "multi-beam NOMA vs TDMA over beta",
        ok,
        format!(
            "NOMA-TDMA gaps {:?} (never worse: {noma_never_worse}, increasing: {gap_increasing}); {elapsed:?}",
            gaps.iter().map(|g| (g * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    );
    ok
}

fn unequal_beam_gains_raise_sum_rate() -> bool {
    let start = Instant::now();
    let cfg = ScenarioConfig::preset(Command::SweepGain);
    let table = rows(&sweep_gain(&cfg).unwrap());
    let elapsed = start.elapsed();

    let g2: Vec<f64> = table.iter().map(|r| r[0]).collect();
    assert_eq!(g2, vec![16.0, 12.0, 8.0, 4.0, 2.0]);
    let rates: Vec<f64> = table.iter().map(|r| r[1]).collect();
    let steps: Vec<f64> = rates.windows(2).map(|w| w[1] - w[0]).collect();
    let non_decreasing = steps.iter().all(|s| *s >= 0.0);
    let shrinking = steps.windows(2).all(|w| w[1] < w[0]);
    let ok = non_decreasing && shrinking && elapsed < Duration::from_secs(1);
    report("sum rate as G2 decreases", ok, format!("increments {steps:.4?}; {elapsed:?}"));
    ok
}

fn random_weight_vectors_conserve_gain() -> bool {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4096);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=64);
        let w: Vec<Complex64> =
            (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let awv = Awv::from_weights(w).unwrap();
        let integral = gain_integral(&awv, 4096).unwrap();
        worst = worst.max((integral - 1.0).abs());
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-3 && elapsed < Duration::from_secs(10);
    report("gain conservation", ok, format!("worst deviation {worst:.3e}; {elapsed:?}"));
    ok
}

fn equal_gain_noma_matches_single_user_capacity() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let gamma = 10f64.powf(rng.random_range(-3.0..4.0));
        let p = 10f64.powf(rng.random_range(-2.0..2.0));
        let split: f64 = rng.random_range(0.0..=1.0);
        let members = vec![
            NomaMember { user_id: 1, effective_gain: gamma, power: split * p },
            NomaMember { user_id: 2, effective_gain: gamma, power: p - split * p },
        ];
        let sum = noma_rates(&NomaGroup::new(members, p).unwrap()).sum_rate;
        worst = worst.max((sum - (1.0 + p * gamma).log2()).abs());
    }
    let ok = worst <= 1e-12;
    report("equal-gain NOMA identity", ok, format!("worst deviation {worst:.3e}"));
    ok
}

fn designers_against_exhaustive_oracle() -> bool {
    let start = Instant::now();
    let geom = ArrayGeometry::new(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(816);
    let mut cm_ok = 0;
    let mut sub_ok = 0;
    let mut worst_cm = f64::INFINITY;
    let mut worst_sub = f64::NEG_INFINITY;
    for _ in 0..20 {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b = loop {
            let b: f64 = rng.random_range(-1.0..1.0);
            if (a - b).abs() >= geom.min_beam_width() {
                break b;
            }
        };
        let share: f64 = rng.random_range(0.2..0.8);
        let targets = [BeamTarget::new(dir(a), 8.0 * share), BeamTarget::new(dir(b), 8.0 * (1.0 - share))];
        let oracle = exhaustive_cm_oracle(geom, &targets, 16).unwrap().min_ratio();
        let cm = cm_optimize_multibeam(geom, &targets, &CmOptions::default()).unwrap().min_ratio();
        let sub = subarray_multibeam(geom, &targets, None).unwrap().min_ratio();
        cm_ok += usize::from(cm >= 0.9 * oracle);
        sub_ok += usize::from(sub <= oracle);
        worst_cm = worst_cm.min(cm / oracle);
        worst_sub = worst_sub.max(sub / oracle);
    }
    let elapsed = start.elapsed();
    let ok = cm_ok == 20 && sub_ok == 20 && elapsed < Duration::from_secs(60);
    report(
        "designers vs exhaustive oracle",
        ok,
        format!(
            "cm >= 0.9 oracle on {cm_ok}/20 (worst ratio {worst_cm:.4}); subarray <= oracle on {sub_ok}/20 (worst ratio {worst_sub:.4}); {elapsed:?}"
        ),
    );
    ok
}

fn random_alloc_problem(rng: &mut ChaCha8Rng) -> AllocationProblem {
    let beta: f64 = rng.random_range(1.0..8.0);
    let a: f64 = rng.random_range(-1.0..0.0);
    let b: f64 = rng.random_range(0.0..1.0);
    AllocationProblem {
        users: vec![
            AllocUser { channel_power: 1.0 / beta, direction: dir(a) },
            AllocUser { channel_power: 1.0, direction: dir(b) },
        ],
        total_power: 1.0,
        noise: 1.0,
        min_rates: vec![rng.random_range(0.1..1.0), rng.random_range(0.0..0.5)],
        gain_budget: GainBudget::SumToN,
        geom: ArrayGeometry::new(32).unwrap(),
    }
}

fn allocation_matches_grid_oracle() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst: f64 = 0.0;
    let mut within = 0;
    let mut above = 0;
    for _ in 0..20 {
        let p = random_alloc_problem(&mut rng);
        let s = joint_power_gain_2user(&p).unwrap();
        let o = brute_force_alloc_oracle(&p, 200, 200).unwrap();
        assert_eq!(s.feasible, o.feasible);
        let diff = (s.objective - o.objective).abs();
        worst = worst.max(diff);
        within += usize::from(diff <= 1e-3);
        above += usize::from(s.objective >= o.objective);
    }
    let ok = within == 20;
    report(
        "allocation vs 200x200 grid oracle",
        ok,
        format!("{within}/20 within 1e-3; worst {worst:.3e} bits; solver >= oracle on {above}/20"),
    );
    ok
}

fn pairing_dominance_and_merge() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut dominance = 0;
    let mut merge_ok = 0;
    let mut merges = 0;
    for trial in 0..100 {
        let users: Vec<ChannelState> = (0..6)
            .map(|i| {
                let phi = rng.random_range(-1.0..1.0);
                let p = 10f64.powf(rng.random_range(-1.0..1.0));
                ChannelState::deterministic(i + 1, dir(phi), p).unwrap()
            })
            .collect();
        let model = if trial % 2 == 0 { BeamModel::Ideal } else { BeamModel::Physical };
        let inst = PairingInstance {
            users: users.clone(),
            geom: ArrayGeometry::new(32).unwrap(),
            beam_forming: BeamForming::Multi,
            beam_model: model,
            group_power: 100.0,
            noise: 1.0,
            power_policy: PowerPolicy::default(),
        };
        let e = exhaustive_pairing(&inst).unwrap();
        let h = strong_weak_heuristic(&inst).unwrap();
        dominance += usize::from(e.objective >= h.objective);

        // also merge a plan pairing angular neighbours, so close pairs occur
        let mut order: Vec<&ChannelState> = users.iter().collect();
        order.sort_by(|a, b| a.direction.phi().total_cmp(&b.direction.phi()));
        let neighbours: Vec<(Vec<u32>, bool)> =
            order.chunks(2).map(|c| (c.iter().map(|u| u.user_id).collect(), false)).collect();
        let near = evaluate_plan(&inst, &neighbours).unwrap();
        let mut all_ok = true;
        for plan in [&e, &h, &near] {
            let once = angle_merge(&inst, plan).unwrap();
            let twice = angle_merge(&inst, &once).unwrap();
            merges += once.groups.iter().filter(|g| g.merged).count();
            all_ok &= twice == once && once.objective >= plan.objective;
        }
        merge_ok += usize::from(all_ok);
    }
    let ok = dominance == 100 && merge_ok == 100;
    report(
        "pairing dominance and angle merge",
        ok,
        format!("exhaustive >= heuristic on {dominance}/100; merge idempotent and non-decreasing on {merge_ok}/100 ({merges} merged groups)"),
    );
    ok
}

fn alternating_optimization_is_monotone() -> bool {
    let start = Instant::now();
    let mut monotone = 0;
    let mut converged = 0;
    let mut max_iter = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_alloc_problem(&mut rng);
        let designer = if seed % 2 == 0 {
            Designer::Subarray
        } else {
            Designer::CmOptimize(CmOptions { restart_seed: seed, ..CmOptions::default() })
        };
        let out = alternating_optimize(&problem, &designer, &AlternatingOptions::default()).unwrap();
        monotone += usize::from(out.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        converged += usize::from(out.converged && out.iterations <= 30);
        max_iter = max_iter.max(out.iterations);
    }
    let elapsed = start.elapsed();
    let ok = monotone == 50 && converged == 50;
    report(
        "alternating optimization monotonicity",
        ok,
        format!("monotone {monotone}/50; converged within 30 iterations {converged}/50 (max {max_iter}); {elapsed:?}"),
    );
    ok
}

fn hybrid_sanity() -> bool {
    // one chain is plain NOMA
    let geom = ArrayGeometry::new(32).unwrap();
    let targets = [BeamTarget::new(dir(-0.3), 16.0), BeamTarget::new(dir(0.45), 16.0)];
    let awv = subarray_multibeam(geom, &targets, None).unwrap().awv;
    let chans = vec![
        ChannelState::deterministic(1, dir(-0.3), 0.25).unwrap(),
        ChannelState::deterministic(2, dir(0.45), 1.0).unwrap(),
    ];
    let single = HybridConfig::new(
        vec![RfChainPlan { chain_id: 1, awv: awv.clone(), members: vec![(1, 75.0), (2, 25.0)], chain_power: 100.0 }],
        2,
        Precoder::Identity,
    )
    .unwrap();
    let m1 = mode1_evaluate(&single, &chans, 1.0, false).unwrap();
    let direct = noma_rates(
        &NomaGroup::new(
            chans
                .iter()
                .zip([75.0, 25.0])
                .map(|(c, p)| NomaMember {
                    user_id: c.user_id,
                    effective_gain: c.power() * mmwave_noma::array::beam_gain(&awv, c.direction) / 1.0,
                    power: p,
                })
                .collect(),
            100.0,
        )
        .unwrap(),
    );
    let single_ok = m1.rates == direct;

    // MUI only lowers rates in the two-chain demo scenario
    let cfg = ScenarioConfig::preset(Command::HybridDemo);
    let channels = cfg.channels(cfg.seed).unwrap();
    let chains = hybrid_chains(&cfg, &channels, cfg.seed).unwrap();
    let two = HybridConfig::new(chains, 2, Precoder::Identity).unwrap();
    let on = mode1_evaluate(&two, &channels, cfg.noise_power, false).unwrap();
    let off = mode1_evaluate(&two, &channels, cfg.noise_power, true).unwrap();
    let mui_ok = on.rows.iter().zip(&off.rows).all(|(a, b)| a.user_id == b.user_id && a.rate <= b.rate);

    // beams steered onto each other's nulls: zero-forcing changes nothing
    let g8 = ArrayGeometry::new(8).unwrap();
    let orth = vec![
        RfChainPlan {
            chain_id: 1,
            awv: mmwave_noma::design::steer_single(g8, dir(0.0)),
            members: vec![(1, 1.0)],
            chain_power: 1.0,
        },
        RfChainPlan {
            chain_id: 2,
            awv: mmwave_noma::design::steer_single(g8, dir(0.5)),
            members: vec![(2, 1.0)],
            chain_power: 1.0,
        },
    ];
    let orth_ch = vec![
        ChannelState::deterministic(1, dir(0.0), 1.0).unwrap(),
        ChannelState::deterministic(2, dir(0.5), 2.0).unwrap(),
    ];
    let ident =
        mode2_evaluate(&HybridConfig::new(orth.clone(), 1, Precoder::Identity).unwrap(), &orth_ch, 1.0).unwrap();
    let zf = mode2_evaluate(&HybridConfig::new(orth, 1, Precoder::ZeroForcing).unwrap(), &orth_ch, 1.0).unwrap();
    let zf_dev = ident.rows.iter().zip(&zf.rows).map(|(a, b)| (a.rate - b.rate).abs()).fold(0.0, f64::max);
    let zf_ok = zf_dev <= 1e-6;

    let ok = single_ok && mui_ok && zf_ok;
    report(
        "hybrid sanity",
        ok,
        format!("M=1 identical: {single_ok}; MUI-on <= MUI-off: {mui_ok}; ZF vs identity deviation {zf_dev:.2e}"),
    );
    ok
}

fn main() -> ExitCode {
    let checks: [fn() -> bool; 10] = [
        single_beam_noma_against_tdma_over_snr,
        multi_beam_noma_against_tdma_over_beta,
        unequal_beam_gains_raise_sum_rate,
        random_weight_vectors_conserve_gain,
        equal_gain_noma_matches_single_user_capacity,
        designers_against_exhaustive_oracle,
        allocation_matches_grid_oracle,
        pairing_dominance_and_merge,
        alternating_optimization_is_monotone,
        hybrid_sanity,
    ];
    let passed = checks.iter().filter(|check| check()).count();
    println!("acceptance: {passed}/{} passed", checks.len());
    if passed == checks.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
