use bilevel_core::env::{rollout, DiscreteMdpParams, EnvTag, Environment, LinearGaussianParams};
use bilevel_core::oracles::{enumerate_policies, fd_critic_theta, ORACLE_VI_TOL};
use bilevel_core::outer::run_bilevel;
use bilevel_core::policy::{StochasticPolicy, TabularSoftmaxPolicy};
use bilevel_core::sensitivities::{
    assemble_policy_jacobian, critic_sensitivities, exact_inner_pg_sensitivities, Occupancy,
};
use bilevel_core::solvers::{distill, evaluate_policy, soft_value_iteration, solve_dare};
use bilevel_core::{BilevelConfig, Pathway, Vector};
use proptest::prelude::*;

fn discrete_theta() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..5.0f64, 24)
}

fn sim(theta: &[f64]) -> DiscreteMdpParams {
    DiscreteMdpParams::real(0.95)
        .unwrap()
        .with_theta(&Vector::from_column_slice(theta))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transition_rows_are_interior_distributions(theta in discrete_theta()) {
        let mdp = sim(&theta);
        for s in 0..3 {
            for a in 0..2 {
                let p = mdp.transition_probs(s, a).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
            }
        }
    }

    #[test]
    fn model_score_has_zero_mean(theta in discrete_theta()) {
        let mdp = sim(&theta);
        for s in 0..3 {
            for a in 0..2 {
                let p = mdp.transition_probs(s, a).unwrap();
                let mean = (0..3).fold(Vector::zeros(24), |acc, n| acc + mdp.grad_log_transition(s, a, n) * p[n]);
                prop_assert!(mean.amax() <= 1e-12, "{}", mean.amax());
            }
        }
    }

    #[test]
    fn continuous_reward_lies_in_unit_interval(
        q in 0.0..3.0f64, r in 0.0..3.0f64, s in -1e3..1e3f64, a in -1e3..1e3f64,
    ) {
        let env = LinearGaussianParams { theta_q: q, theta_r: r, ..Default::default() };
        let rew = env.reward(s, a);
        prop_assert!(rew > 0.0 || (rew == 0.0 && q * s * s + r * a * a > 7000.0));
        prop_assert!(rew <= 1.0);
    }

    #[test]
    fn softmax_rows_normalise_and_scores_cancel(logits in prop::collection::vec(-20.0..20.0f64, 6)) {
        let pol = TabularSoftmaxPolicy::new(3, 2, logits).unwrap();
        for s in 0..3 {
            prop_assert!((pol.probs(s).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for a in 0..2 {
                prop_assert!(pol.grad_log_prob(s, a).sum().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rollouts_chain_and_reproduce(theta in discrete_theta(), seed in any::<u64>()) {
        let mdp = sim(&theta);
        let pol = TabularSoftmaxPolicy::uniform(3, 2);
        let a = rollout(&mdp, &pol, 50, 2, seed, EnvTag::Sim).unwrap();
        let b = rollout(&mdp, &pol, 50, 2, seed, EnvTag::Sim).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|t| t.is_chained()));
    }

    #[test]
    fn riccati_residuals_vanish(
        ts in 0.0..1.2f64, ta in 0.1..2.0f64, tq in 0.05..2.0f64, tr in 0.05..2.0f64,
    ) {
        let env = LinearGaussianParams::default()
            .with_theta(&Vector::from_vec(vec![ts, ta, tq, tr]))
            .unwrap();
        let sol = solve_dare(&env, 1e-12).unwrap();
        let (rp, rk) = sol.residuals(&env);
        prop_assert!(rp <= 1e-10 && rk <= 1e-10, "{rp} {rk}");
    }

    #[test]
    fn greedy_value_iteration_policy_is_the_enumerated_optimum(theta in discrete_theta()) {
        let mdp = sim(&theta);
        let greedy = soft_value_iteration(&mdp, ORACLE_VI_TOL).unwrap().greedy_actions();
        let ranked = enumerate_policies(&mdp).unwrap();
        // ties are measure-zero but guard against near-ties all the same
        prop_assume!(ranked[0].value - ranked[1].value > 1e-9);
        prop_assert_eq!(greedy, ranked[0].actions.clone());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn policy_jacobian_solves_the_implicit_equation(theta in discrete_theta()) {
        let mdp = sim(&theta);
        let (_, pol) = distill(&mdp, ORACLE_VI_TOL, 2.0).unwrap();
        let v = evaluate_policy(&mdp, &pol.table()).unwrap();
        let critic = critic_sensitivities(&mdp, &pol, &v, 1e-13).unwrap();
        let pg = exact_inner_pg_sensitivities(&mdp, &pol, &v, &critic, Occupancy::Discounted).unwrap();
        let jac = assemble_policy_jacobian(&pg, None).unwrap();
        let scale = pg.dpg_dtheta.norm().max(1e-12);
        prop_assert!(jac.ift_residual(&pg) <= 1e-8 * scale, "{}", jac.ift_residual(&pg));
    }

    #[test]
    fn halving_the_step_barely_moves_central_differences(theta in discrete_theta()) {
        let mdp = sim(&theta);
        let (_, pol) = distill(&mdp, ORACLE_VI_TOL, 2.0).unwrap();
        let a = fd_critic_theta(&mdp, &pol.table(), 1e-5).unwrap();
        let b = fd_critic_theta(&mdp, &pol.table(), 5e-6).unwrap();
        prop_assert!((&a - &b).norm() <= 1e-2 * a.norm(), "{}", (&a - &b).norm() / a.norm());
    }
}

#[test]
fn zero_learning_rate_freezes_theta_and_normalises_against_a_fixed_baseline() {
    for mut cfg in [BilevelConfig::discrete(), BilevelConfig::continuous()] {
        cfg.learning_rate = 0.0;
        cfg.max_outer_iters = 4;
        let a = run_bilevel(&cfg, 11).unwrap();
        let b = run_bilevel(&cfg, 11).unwrap();
        assert_eq!(a, b);
        for s in &a.states {
            assert_eq!(s.theta, a.states[0].theta);
            assert_eq!(s.normalized_return, s.real_return / a.j_star);
        }
    }
}

#[test]
fn exact_pathway_improves_the_real_return() {
    let mut cfg = BilevelConfig::discrete();
    cfg.pathway = Pathway::Exact;
    cfg.max_outer_iters = 60;
    let h = run_bilevel(&cfg, 0).unwrap();
    let n = h.states.len();
    let early: f64 = h.states[..6]
        .iter()
        .map(|s| s.normalized_return)
        .sum::<f64>()
        / 6.0;
    let late: f64 = h.states[n - 6..]
        .iter()
        .map(|s| s.normalized_return)
        .sum::<f64>()
        / 6.0;
    assert!(late > early, "{early} -> {late}");
}
