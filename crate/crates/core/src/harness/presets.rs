pub const PRESET_NAMES: [&str; 5] = ["fig1a", "fig1b", "fig3a", "fig3b", "concentration"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig1a" => include_str!("../../presets/fig1a.toml"),
        "fig1b" => include_str!("../../presets/fig1b.toml"),
        "fig3a" => include_str!("../../presets/fig3a.toml"),
        "fig3b" => include_str!("../../presets/fig3b.toml"),
        "concentration" => include_str!("../../presets/concentration.toml"),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::super::ExperimentConfig;
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in PRESET_NAMES {
            let c = ExperimentConfig::preset(name).unwrap();
            assert!(!c.grid().is_empty(), "{name}");
        }
        assert!(ExperimentConfig::preset("fig9").is_err());
    }

    #[test]
    fn figure_presets_match_stated_parameters() {
        let fig1a = ExperimentConfig::preset("fig1a").unwrap();
        assert_eq!((fig1a.d[0], fig1a.r[0], fig1a.k[0]), (50, 5, 100));
        assert_eq!((fig1a.n[0], *fig1a.n.last().unwrap()), (20, 200));
        let fig3a = ExperimentConfig::preset("fig3a").unwrap();
        assert_eq!((fig3a.k[0], fig3a.n[0], fig3a.fewshot.eval_n), (2000, 50, Some(1000)));
        let fig3b = ExperimentConfig::preset("fig3b").unwrap();
        assert_eq!(fig3b.r, vec![20, 50, 100, 784]);
        assert_eq!(fig3b.mnist.pairs.len(), 15);
        assert!(!fig3b.mnist.pairs.contains(&[1, 9]) && !fig3b.mnist.pairs.contains(&[9, 1]));
        assert_eq!(fig3b.mnist.per_class, 500);
    }
}
