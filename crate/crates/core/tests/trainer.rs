use commsim_core::config::ScenarioConfig;
use commsim_core::simulator::{run_episodes, Mode};
use commsim_core::trainer::{resonet_loss_graph, train, Credit, ResonetObjective, RolloutBatch, TrainConfig, Trainer};
use commsim_nn::{Graph, ParamId, Tensor};

fn small(mode: Mode) -> ScenarioConfig {
    let mut sc = ScenarioConfig::predator_prey();
    sc.mode = mode;
    sc.env.episode_length = 6;
    sc.train = TrainConfig {
        iterations: 2,
        episodes_per_iteration: 4,
        epochs: 2,
        minibatches: 2,
        workers: 1,
        ..TrainConfig::default()
    };
    sc
}

fn snapshot(nets: &commsim_core::agent::Networks, ids: &[ParamId]) -> Vec<Tensor> {
    ids.iter().map(|&id| nets.params.get(id).clone()).collect()
}

#[test]
fn zero_learning_rates_leave_parameters_unchanged() {
    for mode in [Mode::Vil2c, Mode::Avg, Mode::Fc, Mode::Nocomm] {
        let mut sc = small(mode);
        sc.train.actor_lr = 0.0;
        sc.train.critic_lr = 0.0;
        sc.train.resonet_lr = 0.0;
        let mut nets = sc.init_networks(1);
        let before = nets.params.clone();
        let metrics = train(&sc.sim_config(), &sc.train, 1, &mut nets, |_, n| {
            assert_eq!(n.params, before, "{mode:?}");
            Ok(())
        })
        .unwrap();
        assert_eq!(metrics.len(), 2);
    }
}

#[test]
fn same_seed_gives_identical_metrics_and_parameters() {
    let sc = small(Mode::Vil2c);
    let run = |workers: usize| {
        let mut tc = sc.train.clone();
        tc.workers = workers;
        let mut nets = sc.init_networks(4);
        let m = train(&sc.sim_config(), &tc, 4, &mut nets, |_, _| Ok(())).unwrap();
        (m, nets.params)
    };
    let (m1, p1) = run(1);
    let (m2, p2) = run(1);
    let (m3, p3) = run(3);
    assert_eq!(m1, m2);
    assert_eq!(p1, p2);
    assert_eq!(m1, m3);
    assert_eq!(p1, p3);
    assert!(m1.iter().all(|m| m.resonet_loss.is_some() && m.total_voi.is_some()));
}

#[test]
fn resonet_and_policy_updates_touch_disjoint_parameters() {
    let sc = small(Mode::Vil2c);
    let base = sc.init_networks(2);
    let policy: Vec<ParamId> = base.policy_ids().into_iter().chain(base.critic_ids()).collect();
    let resonet = base.resonet_ids();

    let mut only_resonet = sc.train.clone();
    only_resonet.actor_lr = 0.0;
    only_resonet.critic_lr = 0.0;
    let mut nets = base.clone();
    Trainer::new(sc.sim_config(), only_resonet, 2, &nets).unwrap().iteration(&mut nets, 0).unwrap();
    assert_eq!(snapshot(&nets, &policy), snapshot(&base, &policy));
    assert_ne!(snapshot(&nets, &resonet), snapshot(&base, &resonet));

    let mut only_policy = sc.train.clone();
    only_policy.resonet_lr = 0.0;
    let mut nets = base.clone();
    Trainer::new(sc.sim_config(), only_policy, 2, &nets).unwrap().iteration(&mut nets, 0).unwrap();
    assert_eq!(snapshot(&nets, &resonet), snapshot(&base, &resonet));
    assert_ne!(snapshot(&nets, &policy), snapshot(&base, &policy));
}

#[test]
fn non_communicating_modes_never_train_resonet() {
    for mode in [Mode::Avg, Mode::Fc, Mode::Nocomm] {
        let sc = small(mode);
        let base = sc.init_networks(5);
        let mut nets = base.clone();
        let m = train(&sc.sim_config(), &sc.train, 5, &mut nets, |_, _| Ok(())).unwrap();
        assert!(m.iter().all(|m| m.resonet_loss.is_none()), "{mode:?}");
        let ids = base.resonet_ids();
        assert_eq!(snapshot(&nets, &ids), snapshot(&base, &ids), "{mode:?}");
    }
}

fn vil2c_batch(sc: &ScenarioConfig, nets: &commsim_core::agent::Networks) -> RolloutBatch {
    let rollouts = run_episodes(&sc.sim_config(), nets, &[11, 12], 1).unwrap();
    RolloutBatch::from_rollouts(&rollouts, Credit::Agent).unwrap()
}

fn resonet_grads(sc: &ScenarioConfig, nets: &commsim_core::agent::Networks, batch: &RolloutBatch, xi: &Tensor) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let l = resonet_loss_graph(
        &mut g,
        nets,
        batch,
        xi,
        sc.budgets.bandwidth,
        sc.budgets.power,
        ResonetObjective::PerStep,
    )
    .unwrap();
    let loss = g.value(l).item();
    (loss, g.backward(l).unwrap().param_grads(&nets.params))
}

#[test]
fn zero_importance_gives_zero_resonet_loss_and_gradient() {
    let sc = small(Mode::Vil2c);
    let nets = sc.init_networks(6);
    let batch = vil2c_batch(&sc, &nets);
    let k = sc.env.n_agents - 1;
    let xi = Tensor::zeros(batch.resonet_inputs.rows(), k);
    let (loss, grads) = resonet_grads(&sc, &nets, &batch, &xi);
    assert_eq!(loss, 0.0);
    assert!(grads.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn descending_resonet_loss_shifts_budget_toward_the_important_link() {
    let sc = small(Mode::Vil2c);
    let mut nets = sc.init_networks(7);
    let batch = vil2c_batch(&sc, &nets);
    let rows = batch.resonet_inputs.rows();
    let k = sc.env.n_agents - 1;
    let mut xi = Tensor::zeros(rows, k);
    for r in 0..rows {
        xi.set(r, 0, 1.0);
    }
    let inputs: Vec<Vec<f64>> = (0..rows).map(|r| batch.resonet_inputs.row(r).to_vec()).collect();
    let share = |nets: &commsim_core::agent::Networks| {
        let (b, p) = nets.resonet_fractions(&inputs).unwrap();
        let mean = |t: &Tensor| (0..rows).map(|r| t.get(r, 0)).sum::<f64>() / rows as f64;
        (mean(&b), mean(&p))
    };
    let (b0, p0) = share(&nets);
    let (l0, grads) = resonet_grads(&sc, &nets, &batch, &xi);
    let step = 1e-3 / grads.iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt();
    for id in nets.resonet_ids() {
        let g = grads[id.index()].clone();
        for (w, d) in nets.params.get_mut(id).data_mut().iter_mut().zip(g.data()) {
            *w -= step * d;
        }
    }
    let (b1, p1) = share(&nets);
    let (l1, _) = resonet_grads(&sc, &nets, &batch, &xi);
    assert!(l1 < l0, "loss {l0} -> {l1}");
    assert!(b1 > b0 && p1 > p0, "bandwidth {b0} -> {b1}, power {p0} -> {p1}");
}
