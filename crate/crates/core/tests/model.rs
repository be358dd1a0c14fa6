mod common;

use common::{outcomes, terminal};
use proptest::prelude::*;
use supportive_core::harness::{build_benchmark, BenchmarkParams};
use supportive_core::htm::{parse_htm, ObjectSet, PrefId};
use supportive_core::model::{NoiseConfig, PrefSet};
use supportive_core::{compile, rng, ActionToken, CompilerConfig, GenerativeModel, WorldState};

fn model(name: &str) -> GenerativeModel {
    compile(&build_benchmark(name, &BenchmarkParams::default()).unwrap(), &CompilerConfig::default()).unwrap()
}

fn state_in(m: &GenerativeModel, instance: u32, pos: u32, ws: u64, prefs: u64) -> WorldState {
    let n_inst = m.instances().len() as u32;
    let instance = instance % n_inst;
    let len = m.instances()[instance as usize].leaves.len() as u32;
    let n_obj = m.universe().objects.len();
    let n_pref = m.universe().preferences.len();
    WorldState {
        instance,
        pos: pos % len,
        workspace: ObjectSet(ws & ((1u64 << n_obj) - 1)),
        prefs: PrefSet(prefs & ((1u64 << n_pref) - 1)),
    }
}

#[test]
fn final_event_with_one_uncleaned_object_is_worth_85() {
    let doc = r#"{
        "objects": [{"id": "glue", "class": "tool"}],
        "root": {"leaf": {"name": "last", "advance_actions": [{"action": "wait"}]}}
    }"#;
    let m = compile(&parse_htm(doc).unwrap(), &CompilerConfig::default()).unwrap();
    let s = WorldState {
        instance: 0,
        pos: 0,
        workspace: ObjectSet(1),
        prefs: PrefSet::default(),
    };
    let step = m.sample_step(&s, ActionToken::Wait, &mut rng::stream(0, 0));
    assert!(m.is_terminal(&step.next));
    // wait costs 0; the transition is worth 10; the rest is the final event
    assert_eq!(step.reward - 0.0 - 10.0, 85.0);
}

#[test]
fn table_final_step_rewards() {
    let m = model("table").with_noise(NoiseConfig::NONE);
    let u = m.universe();
    let last = m.instances()[0].leaves.len() as u32 - 1;
    let mut ws = ObjectSet::EMPTY;
    for o in ["screwdriver", "screws", "leg", "top"] {
        ws.insert(u.object(o).unwrap());
    }
    let s = WorldState {
        instance: 0,
        pos: last,
        workspace: ws,
        prefs: PrefSet::default(),
    };
    let step = m.sample_step(&s, ActionToken::Wait, &mut rng::stream(0, 0));
    // leg and top consumed; screwdriver and screws left over
    assert_eq!(step.reward, 10.0 + 100.0 - 30.0);
    assert_eq!(step.next.workspace.len(), 2);
}

#[test]
fn instances_are_drawn_uniformly() {
    let m = model("uniform");
    let k = m.instances().len();
    assert_eq!(k, 16);
    let n = 32_000;
    let mut counts = vec![0usize; k];
    let mut r = rng::stream(42, 0);
    for _ in 0..n {
        counts[m.sample_initial(&mut r).instance as usize] += 1;
    }
    let e = n as f64 / k as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 99.9th percentile of chi-square with 15 degrees of freedom
    assert!(chi2 < 37.70, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn one_step_expectation_matches_exact_sum() {
    let m = model("table");
    let u = m.universe();
    let mut prefs = PrefSet::default();
    prefs.set(PrefId(0), true);
    let mut ws = ObjectSet::EMPTY;
    ws.insert(u.object("screwdriver").unwrap());
    ws.insert(u.object("leg").unwrap());
    let s = WorldState {
        instance: 0,
        pos: 0,
        workspace: ws,
        prefs,
    };
    let mut r = rng::stream(7, 0);
    let n = 200_000;
    for &a in m.actions() {
        let exact = outcomes(&m, &s, a, m.noise);
        let er: f64 = exact.iter().map(|o| o.prob * o.reward).sum();
        let ef: f64 = exact.iter().filter(|o| o.fail).map(|o| o.prob).sum();
        let ew: f64 = exact.iter().map(|o| o.prob * o.next.workspace.len() as f64).sum();
        let (mut sr, mut sf, mut sw) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let st = m.sample_step(&s, a, &mut r);
            sr += st.reward;
            sf += st.obs.is_fail() as u8 as f64;
            sw += st.next.workspace.len() as f64;
        }
        let n = n as f64;
        assert!((sr / n - er).abs() < 0.1, "{a:?} reward {} vs {er}", sr / n);
        assert!((sf / n - ef).abs() < 0.005, "{a:?} fail {} vs {ef}", sf / n);
        assert!((sw / n - ew).abs() < 0.01, "{a:?} objects {} vs {ew}", sw / n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sampled_steps_are_possible_outcomes(
        bench in prop::sample::select(vec!["table", "leg", "alternative", "uniform"]),
        inst in 0u32..64, pos in 0u32..64, ws in any::<u64>(), prefs in any::<u64>(),
        ai in 0usize..64, seed in any::<u64>(),
    ) {
        let m = model(bench);
        let s = state_in(&m, inst, pos, ws, prefs);
        let a = m.actions()[ai % m.actions().len()];
        let step = m.sample_step(&s, a, &mut rng::stream(seed, 0));
        let exact = outcomes(&m, &s, a, m.noise);
        prop_assert!(exact.iter().any(|o| o.next == step.next && o.fail == step.obs.is_fail() && o.reward == step.reward),
            "{:?} from {:?} gave {:?}", a, s, step);
        let (lo, hi) = m.reward_bounds();
        prop_assert!(lo <= step.reward && step.reward <= hi);
        prop_assert!(step.next.pos == s.pos || step.next.pos == s.pos + 1);
        prop_assert_eq!(step.advanced, step.next.pos == s.pos + 1);
        prop_assert_eq!(step.next.instance, s.instance);
        prop_assert_eq!(step.next.prefs, s.prefs);
    }

    #[test]
    fn advancing_consumes_parts(
        inst in 0u32..4, pos in 0u32..64, ws in any::<u64>(), seed in any::<u64>(),
    ) {
        let m = model("table").with_noise(NoiseConfig::NONE);
        let s = state_in(&m, inst, pos, ws, 0);
        let step = m.sample_step(&s, ActionToken::Wait, &mut rng::stream(seed, 0));
        let leaf = &m.instances()[s.instance as usize].leaves[s.pos as usize];
        prop_assert!(step.advanced);
        prop_assert!(step.next.workspace.difference(s.workspace).is_empty());
        for o in leaf.consumed_parts.iter() {
            prop_assert!(!step.next.workspace.contains(o));
        }
        for o in leaf.required_tools.difference(leaf.consumed_parts).iter() {
            prop_assert_eq!(step.next.workspace.contains(o), s.workspace.contains(o));
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed(seed in any::<u64>(), ai in 0usize..16) {
        let m = model("table");
        let mut r1 = rng::stream(seed, 0);
        let mut r2 = rng::stream(seed, 0);
        let mut s1 = m.sample_initial(&mut r1);
        let mut s2 = m.sample_initial(&mut r2);
        prop_assert_eq!(s1, s2);
        for k in 0..30 {
            if terminal(&m, &s1) { break; }
            let a = m.actions()[(ai + k) % m.actions().len()];
            let a1 = m.sample_step(&s1, a, &mut r1);
            let a2 = m.sample_step(&s2, a, &mut r2);
            prop_assert_eq!(a1, a2);
            s1 = a1.next;
            s2 = a2.next;
        }
    }
}
