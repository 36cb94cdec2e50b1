use egpt_core::graphmetrics::assortativity_categorical;
use egpt_core::synthgen::{generate_dataset, Dataset, GeneratorConfig, HomophilyWeights};

fn small(users: usize, final_degree: usize, homophily: HomophilyWeights) -> GeneratorConfig {
    GeneratorConfig {
        users,
        final_degree: Some(final_degree),
        homophily,
        ..GeneratorConfig::default()
    }
}

fn occupation_r(d: &Dataset) -> f64 {
    let labels: Vec<usize> = d.users.iter().map(|u| u.occupation.index()).collect();
    assortativity_categorical(&d.snapshots.last().unwrap().adjacency, &labels).unwrap()
}

#[test]
fn same_seed_same_dataset_other_seed_differs() {
    let c = small(60, 20, HomophilyWeights::default());
    let a = generate_dataset(&c, 5).unwrap();
    assert_eq!(a, generate_dataset(&c, 5).unwrap());
    assert_ne!(a, generate_dataset(&c, 6).unwrap());
}

#[test]
fn networks_only_grow_and_profiles_stay_fixed() {
    let d = generate_dataset(&small(80, 40, HomophilyWeights::default()), 2).unwrap();
    for pair in d.snapshots.windows(2) {
        assert!(pair[0].adjacency.is_subgraph_of(&pair[1].adjacency));
        assert_eq!(pair[1].step, pair[0].step + 1);
    }
    for s in &d.snapshots {
        assert_eq!(s.profiles, d.users);
        for h in &s.history {
            assert!((h.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(h.weights().iter().all(|&w| w >= 0.0));
        }
    }
    let last = d.snapshots.last().unwrap();
    assert!((2.0 * last.adjacency.edge_count() as f64 / 80.0 - 40.0).abs() < 0.05);
}

#[test]
fn location_weight_plants_location_homophily() {
    let r = |w: f64| {
        let d = generate_dataset(&small(150, 20, HomophilyWeights { location: w, ..HomophilyWeights::none() }), 4).unwrap();
        let labels: Vec<usize> = d.users.iter().map(|u| usize::from(u.location)).collect();
        assortativity_categorical(&d.snapshots.last().unwrap().adjacency, &labels).unwrap()
    };
    let (flat, strong) = (r(0.0), r(4.0));
    assert!(flat.abs() < 0.1, "{flat}");
    assert!(strong > 0.3, "{strong}");
}

#[test]
fn occupation_signal_is_capped_by_dense_final_graphs() {
    // Nine occupations over 200 users leave ~22 same-occupation peers each,
    // so at the default final degree (120) most ties must cross groups.
    let dense = generate_dataset(&small(200, 120, HomophilyWeights { occupation: 6.0, ..HomophilyWeights::default() }), 1).unwrap();
    let sparse = generate_dataset(&small(200, 30, HomophilyWeights { occupation: 6.0, ..HomophilyWeights::default() }), 1).unwrap();
    assert!(occupation_r(&dense) < 0.15);
    assert!(occupation_r(&sparse) > 0.5);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(generate_dataset(&GeneratorConfig::default().with_users(1), 0).is_err());
    let too_dense = GeneratorConfig { users: 10, final_degree: Some(10), ..GeneratorConfig::default() };
    assert!(generate_dataset(&too_dense, 0).is_err());
    let heavy = small(20, 5, HomophilyWeights { triadic: 80.0, ..HomophilyWeights::default() });
    assert!(generate_dataset(&heavy, 0).is_err());
}
