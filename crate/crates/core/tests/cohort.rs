use proptest::prelude::*;
use vacancy_core::cohort::{
    compare_scenarios, initialize_uniform, littles_law, littles_law_check, run, steady_state, step, AgeSchedule,
    CohortError, PolicyScenario,
};
use vacancy_core::fixtures::{scenario_abolished, scenario_mandate_67};
use vacancy_core::proportionality::{vcr_uplift, QueueParameters};

#[test]
fn mandate_67_uniform_is_already_steady() {
    let s = scenario_mandate_67();
    let trace = run(&s, 60, &initialize_uniform(&s).unwrap()).unwrap();
    for r in &trace.records {
        assert!((r.vcr - 1.0 / 27.0).abs() < 1e-9, "year {}", r.year_index);
        assert!((r.hires - 10.0).abs() < 1e-9);
        assert_eq!(r.vacancies_by_cause.voluntary, 0.0);
        assert_eq!(r.mean_residence_time, Some(27.0));
    }
    assert!(littles_law_check(&trace, 27..60).unwrap() < 1e-12);
}

#[test]
fn abolition_steady_state_and_uplift() {
    let ab = steady_state(&scenario_abolished(), 60).unwrap();
    let m67 = steady_state(&scenario_mandate_67(), 60).unwrap();
    assert!((ab.vcr - 1.0 / 30.0).abs() < 1e-6);
    assert!((ab.mean_career_length - 30.0).abs() < 1e-9);
    assert!(ab.littles_residual < 1e-6 && m67.littles_residual < 1e-6);

    let gross = vcr_uplift(&QueueParameters {
        appointment_age: 40.0,
        mandatory_age: 67.0,
        mean_extension: 3.0,
        other_cause_share: 0.0,
        voluntary_share: 0.0,
    })
    .unwrap()
    .gross_uplift;
    assert!((m67.vcr / ab.vcr - 1.0 - gross).abs() < 1e-6);
}

#[test]
fn abrupt_abolition_transient_exceeds_steady_state_gap() {
    let cmp = compare_scenarios(&scenario_mandate_67(), &scenario_abolished(), 60).unwrap();
    // nobody reaches 70 for three years, so the alternative hires no one
    for d in &cmp.hires_delta[..3] {
        assert!((d - 10.0).abs() < 1e-9);
    }
    assert!((cmp.steady_state_delta - 1.0).abs() < 1e-9);
    assert!(cmp.decade_abs_means[0] > cmp.steady_state_delta.abs());
    assert_eq!(cmp.decade_means.len(), 6);
}

#[test]
fn raising_mandate_by_two_years_gives_two_quiet_years() {
    let m67 = scenario_mandate_67();
    let mut m69 = m67.clone();
    m69.mandatory_age = Some(69);
    let trace = run(&m69, 10, &initialize_uniform(&m67).unwrap()).unwrap();
    let mandatory: Vec<f64> = trace.records.iter().map(|r| r.vacancies_by_cause.mandatory).collect();
    assert_eq!(&mandatory[..2], &[0.0, 0.0]);
    assert!(mandatory[2] > 0.0);
}

#[test]
fn unbounded_ages_rejected() {
    let s = PolicyScenario::simple("forever", 40, None, 100);
    assert_eq!(initialize_uniform(&s), Err(CohortError::UnboundedAges));
}

#[test]
fn hazards_converge_and_satisfy_littles_law() {
    let mut s = scenario_mandate_67();
    s.entry_age_distribution = AgeSchedule::new().with(32, 0.3).with(38, 0.5).with(45, 0.2);
    s.attrition_hazard = AgeSchedule::new().with_range(30..67, 0.01);
    s.voluntary_retirement_hazard = AgeSchedule::new().with_range(60..67, 0.15);
    let trace = run(&s, 400, &initialize_uniform(&s).unwrap()).unwrap();
    let law = littles_law(&trace, 365..400).unwrap();
    assert!(law.residual < 1e-6, "{}", law.residual);
    let last = &trace.records[399];
    assert!((last.vcr - trace.records[398].vcr).abs() < 1e-9);
}

fn scenario_strategy() -> impl Strategy<Value = PolicyScenario> {
    (
        25u32..45,
        0u32..10,
        55u32..75,
        0.0f64..0.05,
        0.0f64..0.3,
        0.0f64..0.03,
        50u64..500,
    )
        .prop_map(|(entry, spread, mandate, attrition, voluntary, growth, posts)| {
            let mut s = PolicyScenario::simple("random", entry, Some(mandate.max(entry + spread + 2)), posts);
            s.entry_age_distribution = AgeSchedule::new().with(entry, 0.5).with(entry + spread, 0.5);
            if spread == 0 {
                s.entry_age_distribution = AgeSchedule::new().with(entry, 1.0);
            }
            s.attrition_hazard = AgeSchedule::new().with_range(entry..mandate, attrition);
            s.voluntary_retirement_hazard = AgeSchedule::new().with_range(mandate.saturating_sub(5)..mandate, voluntary);
            s.post_growth_rate = growth;
            s
        })
}

proptest! {
    #[test]
    fn stock_flow_conservation(s in scenario_strategy(), years in 1u32..80) {
        let mut state = initialize_uniform(&s).unwrap();
        for _ in 0..years {
            let before = state.total();
            let (next, rec) = step(&state, &s);
            let after = next.total();
            prop_assert!((before - rec.vacancies_by_cause.total() + rec.hires - after).abs() < 1e-9 * before.max(1.0));
            prop_assert!((after - s.posts_at(next.year_index)).abs() < 1e-9 * after.max(1.0));
            prop_assert!(next.headcount_by_age.iter().all(|m| *m >= 0.0));
            state = next;
        }
    }

    #[test]
    fn simulation_is_deterministic(s in scenario_strategy()) {
        let init = initialize_uniform(&s).unwrap();
        prop_assert_eq!(run(&s, 40, &init).unwrap(), run(&s, 40, &init).unwrap());
    }

    #[test]
    fn raising_mandate_by_k_gives_k_quiet_years(mandate in 55u32..70, k in 1u32..6) {
        let base = PolicyScenario::simple("base", 35, Some(mandate), 300);
        let mut raised = base.clone();
        raised.mandatory_age = Some(mandate + k);
        let trace = run(&raised, k + 3, &initialize_uniform(&base).unwrap()).unwrap();
        let quiet = trace.records.iter().take_while(|r| r.vacancies_by_cause.mandatory == 0.0).count();
        prop_assert_eq!(quiet, k as usize);
    }

    #[test]
    fn scenario_text_round_trip(s in scenario_strategy()) {
        prop_assert_eq!(PolicyScenario::parse(&s.to_text()).unwrap(), s);
    }
}
