use pdbsde_cli::config::{Exercise, GeneratorConfig};
use pdbsde_cli::presets::{all_presets, estimated_seconds, preset, preset_names, TABLE2_LIPSCHITZ};
use pdbsde_core::{BasisPreset, FitMode, Flavor};

#[test]
fn every_preset_builds_a_valid_problem() {
    let all = all_presets();
    assert_eq!(all.len(), 8 * 4 + 3 * 4 + 2 * 4 + 1);
    for p in &all {
        p.config
            .validate()
            .unwrap_or_else(|e| panic!("{}: {e}", p.name));
        assert_eq!(p.config.label.as_deref(), Some(p.name.as_str()));
        assert!(estimated_seconds(&p.config) > 0.0);
    }
    let mut names = preset_names();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), all.len());
}

#[test]
fn table1_headline_preset() {
    let p = preset("table1-mb7-n40").unwrap();
    let c = &p.config;
    assert_eq!(
        (c.samples.reg, c.samples.outer, c.samples.inner),
        (1000, 10_000, 100)
    );
    assert_eq!(
        (c.mode, c.basis, c.flavor()),
        (FitMode::Mb, BasisPreset::Eu7, Flavor::Convex)
    );
    assert!(c.cv.inner);
    let row = p.published.unwrap();
    assert_eq!((row.low, row.up), (13.7844, 13.8077));
    let berm = preset("table1-berm-1e6-n160").unwrap();
    assert_eq!(berm.config.payoff.exercise(), Exercise::Bermudan);
    assert_eq!(berm.published.unwrap().up, 15.6694);
}

#[test]
fn table2_presets_and_lipschitz_constants() {
    for (k, tag) in ["delta0", "delta1_3", "delta2_3"].iter().enumerate() {
        let p = preset(&format!("table2-{tag}-n40")).unwrap();
        let c = &p.config;
        assert_eq!((c.samples.outer, c.samples.inner), (4000, 1000));
        assert!(matches!(c.generator, GeneratorConfig::Credit { .. }));
        let a = c.driver().unwrap().alpha_y();
        assert_eq!((a * 100.0).round() / 100.0, TABLE2_LIPSCHITZ[k]);
    }
    let last = preset("table2-delta2_3-n40").unwrap().published.unwrap();
    assert_eq!((last.low, last.up), (76.3335, 76.3865));
}

#[test]
fn table3_presets() {
    let s = preset("table3-semigeneric-n40").unwrap();
    assert_eq!(s.config.flavor(), Flavor::Semigeneric);
    assert_eq!(
        (s.published.unwrap().low, s.published.unwrap().up),
        (13.7259, 13.8505)
    );
    let g = preset("table3-generic-n160").unwrap();
    assert_eq!(g.config.flavor(), Flavor::Generic);
    assert_eq!(g.published.unwrap().up, 17.5326);
}

#[test]
fn unknown_preset_is_none() {
    assert!(preset("table9-n40").is_none());
}
