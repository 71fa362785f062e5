//! Embedded figure-analogue configs. `all` merges every figure into one run.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const FIGURES: [(&str, &str); 9] = [
    ("fig1", include_str!("../configs/fig1.toml")),
    ("fig2", include_str!("../configs/fig2.toml")),
    ("fig3", include_str!("../configs/fig3.toml")),
    ("fig4", include_str!("../configs/fig4.toml")),
    ("fig5", include_str!("../configs/fig5.toml")),
    ("fig6", include_str!("../configs/fig6.toml")),
    ("fig7", include_str!("../configs/fig7.toml")),
    ("fig8", include_str!("../configs/fig8.toml")),
    ("fig9", include_str!("../configs/fig9.toml")),
];

pub const ALL: &str = "all";

fn known() -> String {
    let mut ids: Vec<&str> = FIGURES.iter().map(|(id, _)| *id).collect();
    ids.push(ALL);
    ids.join(", ")
}

pub fn figure_config(id: &str) -> Result<RunConfig> {
    if id == ALL {
        let mut merged: Option<RunConfig> = None;
        for (fig, _) in FIGURES {
            let c = figure_config(fig)?;
            match &mut merged {
                None => merged = Some(RunConfig { output_dir: PathBuf::from("reproduce/all"), ..c }),
                Some(m) => m.sweeps.extend(c.sweeps),
            }
        }
        let merged = merged.expect("at least one figure");
        merged.validate()?;
        return Ok(merged);
    }
    let (_, text) = FIGURES
        .iter()
        .find(|(fig, _)| *fig == id)
        .ok_or_else(|| CliError::UnknownFigure(id.to_string(), known()))?;
    RunConfig::from_toml(text, Path::new(&format!("<{id}>")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_figure_parses_and_expands() {
        for (id, _) in FIGURES {
            let c = figure_config(id).unwrap();
            assert!(!c.jobs().unwrap().is_empty(), "{id}");
        }
    }

    #[test]
    fn xy_family_runs_without_step_filter() {
        let c = figure_config(ALL).unwrap();
        for s in &c.sweeps {
            if s.family == crate::config::Family::Xy {
                assert!(!s.step_filter, "{}", s.name);
            }
        }
    }

    #[test]
    fn unknown_figure_lists_choices() {
        let e = figure_config("fig10").unwrap_err();
        assert!(e.to_string().contains("fig9, all"), "{e}");
    }
}
