//! Cross-module properties of the policies and the simulator.

mod common;

use common::{bisect_index, cluster, cluster_with_power};
use gnb_sleep::baselines::{lower_bound, round_robin_longrun_cost, uniform_longrun_cost};
use gnb_sleep::greedy::greedy_longrun_cost;
use gnb_sleep::index::{build_index_table, decoupled_rvia, DecoupledModel, IndexOptions};
use gnb_sleep::joint_mdp::rvia_solve;
use gnb_sleep::sim::{
    batch_means_halfwidth, delta_metric, run_lockstep, run_policy, AlwaysOff, AlwaysOn, GreedyPolicy, IndexPolicy,
    OptimalPolicy, Policy, RoundRobinPolicy, SimOptions, UniformPolicy,
};
use gnb_sleep::{ArrivalMixture, CellParams, Cluster, ClusterConfig, CostFunction, PowerParams};

fn cheap_switch() -> PowerParams {
    PowerParams { p_switch: 10.0, ..PowerParams::standard() }
}

#[test]
fn always_on_and_always_off_limits() {
    let cl = cluster(3, 3, 3, CostFunction::Quadratic);
    let costs = cl.anticipated_costs();
    let on = run_policy(&cl, &mut AlwaysOn::new(3), 100_000, 11).unwrap();
    let c11: f64 = costs.iter().map(|c| c.c11).sum();
    assert!((on.avg_cost - c11).abs() <= on.ci_halfwidth, "{} vs {c11} +- {}", on.avg_cost, on.ci_halfwidth);
    let off = run_policy(&cl, &mut AlwaysOff::new(3), 100_000, 11).unwrap();
    let c0: f64 = costs.iter().map(|c| c.c0).sum();
    assert!((off.avg_cost - c0).abs() <= off.ci_halfwidth, "{} vs {c0} +- {}", off.avg_cost, off.ci_halfwidth);
    assert_eq!(off.composition.static_w, 0.0);
}

#[test]
fn idle_cells_cost_exactly_static_power() {
    let cell = CellParams::new(ArrivalMixture::single(0.0).unwrap(), 500.0).unwrap();
    let cfg = ClusterConfig::new(vec![cell; 2], 0, 1800.0, PowerParams::standard(), CostFunction::Linear, 4).unwrap();
    let cl = Cluster::new(cfg).unwrap();
    let r = run_policy(&cl, &mut AlwaysOn::new(2), 5_000, 3).unwrap();
    assert_eq!(r.avg_cost, 170.0);
    assert_eq!(r.ci_halfwidth, 0.0);
}

#[test]
fn greedy_on_frequency_matches_two_state_chain() {
    let cl = cluster_with_power(2, 2, CostFunction::Linear, cheap_switch());
    let stats = greedy_longrun_cost(&cl).unwrap();
    let mut pol = GreedyPolicy::new(&cl);
    let mut pols: [&mut dyn Policy; 1] = [&mut pol];
    let opts = SimOptions::new(200_000, 5);
    let burn = 2_000;
    let mut on = vec![Vec::new(); 2];
    let res = run_lockstep(&cl, &mut pols, &opts, |t, recs| {
        if t >= burn {
            for (i, v) in on.iter_mut().enumerate() {
                v.push(recs[0].action.is_on(i) as u8 as f64);
            }
        }
    })
    .unwrap();
    for (i, flags) in on.iter().enumerate() {
        let ci = batch_means_halfwidth(flags, 100);
        let expected = stats.cells[i].on_fraction;
        let got = res.results[0].on_fraction[i];
        assert!((got - expected).abs() <= ci, "cell {i}: {got} vs {expected} +- {ci}");
    }
}

#[test]
fn greedy_is_on_less_often_than_optimal() {
    for p_switch in [40.0, 10.0, 5.0] {
        let power = PowerParams { p_switch, ..PowerParams::standard() };
        let cl = cluster_with_power(2, 2, CostFunction::Linear, power);
        let mut g = GreedyPolicy::new(&cl);
        let mut o = OptimalPolicy::new(rvia_solve(&cl).unwrap());
        let mut pols: [&mut dyn Policy; 2] = [&mut g, &mut o];
        let run = run_lockstep(&cl, &mut pols, &SimOptions::new(20_000, 2), |_, _| {}).unwrap();
        let g_on: f64 = run.results[0].on_fraction.iter().sum();
        let o_on: f64 = run.results[1].on_fraction.iter().sum();
        assert!(g_on <= o_on, "P_switch {p_switch}: greedy {g_on} optimal {o_on}");
    }
}

#[test]
fn optimal_meets_bound_when_switching_is_free() {
    for f in [CostFunction::Linear, CostFunction::Quadratic] {
        let power = PowerParams { p_switch: 0.0, ..PowerParams::standard() };
        let cl = cluster_with_power(2, 2, f.clone(), power);
        let gain = rvia_solve(&cl).unwrap().gain();
        let lb = lower_bound(&cl).unwrap().value;
        assert!((gain - lb).abs() <= 1e-6 * lb, "{f:?}: {gain} vs {lb}");
    }
}

#[test]
fn baseline_closed_forms_match_simulation() {
    // 1.7 half-widths is about 3.3 standard errors, so the whole family of
    // comparisons stays well clear of the per-check 5% miss rate
    for (m, ks) in [(2usize, vec![1]), (4, vec![1, 2, 3]), (7, vec![2, 5]), (12, vec![1, 6, 11])] {
        for k in ks {
            let cl = cluster(m, k, 3, CostFunction::Quadratic);
            let costs = cl.anticipated_costs();
            let u = run_policy(&cl, &mut UniformPolicy::new(m, k), 40_000, 100 + k as u64).unwrap();
            let cf = uniform_longrun_cost(m, k, &costs);
            assert!((u.avg_cost - cf).abs() <= 1.7 * u.ci_halfwidth, "uniform M={m} K={k}: {} vs {cf}", u.avg_cost);
            let r = run_policy(&cl, &mut RoundRobinPolicy::new(m, k), 40_000, 200 + k as u64).unwrap();
            let cf = round_robin_longrun_cost(m, k, &costs);
            assert!((r.avg_cost - cf).abs() <= 1.7 * r.ci_halfwidth, "round-robin M={m} K={k}: {} vs {cf}", r.avg_cost);
        }
    }
}

#[test]
fn pairing_tightens_the_difference_interval() {
    let cl = cluster_with_power(3, 1, CostFunction::Linear, cheap_switch());
    let table = build_index_table(&DecoupledModel::from_cluster(&cl, 0), &IndexOptions::default()).unwrap();
    let mut opt = OptimalPolicy::new(rvia_solve(&cl).unwrap());
    let mut idx = IndexPolicy::new(vec![table; 3], 1);
    let mut pols: [&mut dyn Policy; 2] = [&mut opt, &mut idx];
    let run = run_lockstep(&cl, &mut pols, &SimOptions::new(50_000, 8), |_, _| {}).unwrap();
    let (_, paired) = run.difference(0, 1);
    let unpaired = run.results[0].ci_halfwidth.hypot(run.results[1].ci_halfwidth);
    assert!(paired < unpaired, "paired {paired} vs unpaired {unpaired}");
}

#[test]
fn simulated_greedy_gap_matches_closed_forms() {
    let cl = cluster(4, 4, 3, CostFunction::Quadratic);
    let lb = lower_bound(&cl).unwrap().value;
    let closed = delta_metric(greedy_longrun_cost(&cl).unwrap().cost, lb).unwrap();
    let r = run_policy(&cl, &mut GreedyPolicy::new(&cl), 100_000, 4).unwrap();
    let sim = delta_metric(r.avg_cost, lb).unwrap();
    assert!(sim > 0.0);
    assert!((sim - closed).abs() <= r.ci_halfwidth / lb * 100.0, "{sim} vs {closed}");
}

#[test]
fn costlier_offload_lowers_every_index() {
    let base = cluster_with_power(1, 1, CostFunction::Linear, cheap_switch());
    let dear = cluster_with_power(1, 1, CostFunction::Linear, PowerParams { p_e: 6.0, ..cheap_switch() });
    let (mb, md) = (DecoupledModel::from_cluster(&base, 0), DecoupledModel::from_cluster(&dear, 0));
    for prev in [false, true] {
        for n in (0..=mb.n_th()).step_by(4) {
            let eb = bisect_index(&mb, prev, n, 1e-10).eps;
            let ed = bisect_index(&md, prev, n, 1e-10).eps;
            assert!(ed <= eb + 1e-6 * (1.0 + eb.abs()), "prev {prev} n {n}: {ed} > {eb}");
        }
    }
}

#[test]
fn single_cell_index_policy_is_the_zero_cost_decoupled_policy() {
    let cl = cluster_with_power(1, 1, CostFunction::Linear, cheap_switch());
    let model = DecoupledModel::from_cluster(&cl, 0);
    let table = build_index_table(&model, &IndexOptions::default()).unwrap();
    let sol = decoupled_rvia(&model, 0.0, None, &Default::default()).unwrap();
    let mut pol = IndexPolicy::new(vec![table.clone()], 1);
    let mut disagreements = 0;
    for prev in [false, true] {
        for n in 0..=model.n_th() {
            if table.get(prev, n).abs() < 1e-6 {
                continue;
            }
            let s = [gnb_sleep::CellState::new(prev, n as u32)];
            let off = !pol.decide(0, &s).is_on(0);
            if off != sol.passive(prev, n) {
                disagreements += 1;
            }
        }
    }
    assert_eq!(disagreements, 0);
}
