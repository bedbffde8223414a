use std::collections::BTreeSet;

use pdnet::clustering::{cluster_count, ClassifierIndex, ClusterModel, Scheme, VerbObjectTable};
use pdnet::diffmath::ParamStore;
use pdnet::embeddings::{make_prior, EmbeddingTable, EMBEDDING_DIM, PRIOR_DIM};
use pdnet::features::{POSE_DIM, SPATIAL_DIM};
use pdnet::network::{
    batch_inputs, build_graph, init_params, lpfa_augment, score_hoi, AblationConfig, GraphMode,
    LpcaVariant, ModelConfig, Row,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_table(
    seed: u64,
    verbs: usize,
    max_objects: usize,
) -> (VerbObjectTable, EmbeddingTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emb = EmbeddingTable::new(16);
    let pool: Vec<String> = (0..max_objects * 2).map(|i| format!("obj{i}")).collect();
    for o in &pool {
        emb.insert(o, uniform(&mut rng, 16, 1.0)).unwrap();
    }
    let mut table = VerbObjectTable::new();
    for v in 0..verbs {
        let n = rng.random_range(1..=max_objects);
        let objs: BTreeSet<String> = (0..n)
            .map(|_| pool[rng.random_range(0..pool.len())].clone())
            .collect();
        emb.insert(&format!("verb{v}"), uniform(&mut rng, 16, 1.0))
            .unwrap();
        table.insert(format!("verb{v}"), objs);
    }
    (table, emb)
}

/// Small model with random (non-zero) parameters, biases included.
pub fn random_model(lpca: LpcaVariant, seed: u64) -> (ModelConfig, ParamStore<f64>) {
    let ablation = AblationConfig {
        lpca,
        ..AblationConfig::default()
    };
    let config = ModelConfig {
        block_hidden: Some(8),
        prior_dim: 12,
        ..ModelConfig::new(6, 3, ablation)
    };
    let mut params = init_params::<f64>(&config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for t in params.values_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    (config, params)
}

pub fn random_rows(config: &ModelConfig, seed: u64, n: usize, scale: f64) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Row {
            prior: uniform(&mut rng, config.prior_dim, 1.0),
            features: config
                .streams
                .iter()
                .map(|s| (s.name.clone(), uniform(&mut rng, s.dim, scale)))
                .collect(),
            slot: i % config.k_c,
            label: 0.0,
            weight: 1.0,
        })
        .collect()
}

pub fn prior_is_verb_then_object(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = EmbeddingTable::new(EMBEDDING_DIM);
    let verb = uniform(&mut rng, EMBEDDING_DIM, 1.0);
    let object = uniform(&mut rng, EMBEDDING_DIM, 1.0);
    t.insert("ride", verb.clone()).unwrap();
    t.insert("horse", object.clone()).unwrap();
    let p = make_prior(&t, "ride", "horse").unwrap().values;
    prop_assert_eq!(p.len(), PRIOR_DIM);
    prop_assert_eq!(&p[..EMBEDDING_DIM], &verb[..]);
    prop_assert_eq!(&p[EMBEDDING_DIM..], &object[..]);
    prop_assert_eq!(make_prior(&t, "ride", "horse").unwrap().values, p);
    Ok(())
}

pub fn lpfa_widths(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = uniform(&mut rng, PRIOR_DIM, 1.0);
    let s = uniform(&mut rng, SPATIAL_DIM, 1.0);
    let p = uniform(&mut rng, POSE_DIM, 1.0);
    let sa = lpfa_augment(&s, &prior);
    let pa = lpfa_augment(&p, &prior);
    prop_assert_eq!(sa.len(), 642);
    prop_assert_eq!(pa.len(), 872);
    prop_assert_eq!(&sa[..42], &s[..]);
    prop_assert_eq!(&pa[272..], &prior[..]);
    Ok(())
}

pub fn attention_never_amplifies(seed: u64, scale: f64) -> Result<(), TestCaseError> {
    for lpca in [
        LpcaVariant::Full,
        LpcaVariant::PlainCa,
        LpcaVariant::NoSau,
        LpcaVariant::ConcatDa,
    ] {
        let (config, params) = random_model(lpca, seed);
        let g = build_graph::<f64>(&config, GraphMode::Infer).unwrap();
        let rows = random_rows(&config, seed, 4, scale);
        let inputs = batch_inputs::<f64, Row>(&config, &rows, false).unwrap();
        let ev = g.graph.evaluate(&params, &inputs).unwrap();
        for stream in ["H", "O"] {
            let refined = ev.output(&format!("refined.{stream}")).unwrap();
            let feat = &inputs[&format!("feat.{stream}")];
            for (r, f) in refined.data().iter().zip(feat.data()) {
                prop_assert!(r.abs() <= f.abs(), "{lpca}: |{r}| > |{f}|");
            }
        }
    }
    Ok(())
}

pub fn fusion_weights_open_interval(seed: u64) -> Result<(), TestCaseError> {
    let (config, params) = random_model(LpcaVariant::Full, seed);
    let g = build_graph::<f64>(&config, GraphMode::Infer).unwrap();
    let rows = random_rows(&config, seed, 4, 1.0);
    let inputs = batch_inputs::<f64, Row>(&config, &rows, false).unwrap();
    let ev = g.graph.evaluate(&params, &inputs).unwrap();
    let a = ev.output("pamf").unwrap();
    prop_assert_eq!(a.shape(), &[4, config.streams.len()][..]);
    prop_assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
    let s = ev.value(g.s_pd);
    prop_assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    Ok(())
}

pub fn detection_score_bounded_by_factors(
    h: f64,
    o: f64,
    pd: f64,
    i: f64,
) -> Result<(), TestCaseError> {
    let s = score_hoi(h, o, pd, i).unwrap();
    prop_assert!(s <= h.min(o).min(pd).min(i));
    prop_assert!(s >= 0.0);
    Ok(())
}

pub fn slot_rules(seed: u64, verbs: usize, max_objects: usize) -> Result<(), TestCaseError> {
    let (table, emb) = random_table(seed, verbs, max_objects);
    let clusters = ClusterModel::build(&table, &emb, seed).unwrap();
    let sh = ClassifierIndex::build(Scheme::Shared, &table, None).unwrap();
    let sp = ClassifierIndex::build(Scheme::Specific, &table, None).unwrap();
    let csp = ClassifierIndex::build(Scheme::Clustered, &table, Some(&clusters)).unwrap();

    prop_assert_eq!(sh.k_c, table.len());
    prop_assert_eq!(sp.k_c, table.values().map(BTreeSet::len).sum::<usize>());
    let expected: usize = table
        .values()
        .map(|o| cluster_count(o.len()).unwrap())
        .sum();
    prop_assert_eq!(csp.k_c, expected);
    prop_assert_eq!(clusters.total_clusters(), expected);

    let sp_slots: BTreeSet<usize> = sp.entries.iter().map(|e| e.slot).collect();
    prop_assert_eq!(sp_slots.len(), sp.entries.len());
    for (verb, objects) in &table {
        let vs = sh.verb_slot(verb).unwrap();
        for a in objects {
            prop_assert_eq!(sh.slot(verb, a), Some(vs));
            for b in objects {
                let same = clusters.cluster_of(verb, a) == clusters.cluster_of(verb, b);
                prop_assert_eq!(csp.slot(verb, a) == csp.slot(verb, b), same);
            }
        }
    }
    for e in csp.entries.iter().chain(&sh.entries).chain(&sp.entries) {
        prop_assert!(e.slot < csp.k_c.max(sh.k_c).max(sp.k_c));
    }
    Ok(())
}
