use serde::Serialize;
use sha2::{Digest, Sha256};

use super::RunFlags;
use crate::qdaa::{memory_stats, variable_bounds, Diagnostics, Qdaa, RunConfig};

#[derive(Debug, Clone, Serialize)]
pub struct VarBound {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// Summary of one build. `command` reproduces the automaton exactly.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub model: String,
    pub model_hash: String,
    pub config: RunConfig,
    pub command: String,
    pub automaton_hash: String,
    pub states: usize,
    pub transitions: usize,
    pub rectangles: usize,
    pub rho: f64,
    pub bounds: Vec<VarBound>,
    pub wall_clock_seconds: f64,
    pub simulations: u64,
    pub diagnostics: Diagnostics,
}

impl RunReport {
    pub fn new(model_arg: &str, flags: &RunFlags, q: &Qdaa, text: &str, wall: f64) -> Self {
        let p = &q.provenance;
        let c = &p.config;
        let mut command = format!(
            "qdaa build {model_arg} --kappa {} --sims {} --sampling {} --seed {} --tmax {}",
            c.kappa,
            c.sims,
            c.sampling.name(),
            c.seed,
            c.integrator.t_max
        );
        if let Some(h) = c.integrator.step {
            command.push_str(&format!(" --step {h}"));
        }
        if c.backward_refine {
            command.push_str(" --backward");
        }
        if let Some(path) = &flags.constants {
            command.push_str(&format!(" --constants {}", path.display()));
        }
        let stats = memory_stats(q);
        let bounds = p
            .var_names
            .iter()
            .zip(variable_bounds(q))
            .map(|(name, (lo, hi))| VarBound {
                name: name.clone(),
                lo,
                hi,
            })
            .collect();
        let digest = Sha256::digest(text.as_bytes());
        Self {
            model: p.model_name.clone(),
            model_hash: p.model_hash.clone(),
            config: *c,
            command,
            automaton_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
            states: q.nodes.len(),
            transitions: q.transition_count(),
            rectangles: stats.rects,
            rho: stats.rho,
            bounds,
            wall_clock_seconds: wall,
            simulations: q.diagnostics.simulations,
            diagnostics: q.diagnostics,
        }
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let step = c.integrator.step.map_or("auto".into(), |h| h.to_string());
        let mut rows: Vec<(String, String)> = vec![
            ("model".into(), self.model.clone()),
            ("model hash".into(), self.model_hash.clone()),
            ("kappa".into(), c.kappa.to_string()),
            ("sims".into(), c.sims.to_string()),
            ("sampling".into(), c.sampling.name().into()),
            ("seed".into(), c.seed.to_string()),
            ("t_max".into(), c.integrator.t_max.to_string()),
            ("step".into(), step),
            ("backward".into(), c.backward_refine.to_string()),
            ("states".into(), self.states.to_string()),
            ("transitions".into(), self.transitions.to_string()),
            ("|R(I_C)|".into(), self.rectangles.to_string()),
            ("rho".into(), format!("{:.3}", self.rho)),
            ("simulations".into(), self.simulations.to_string()),
            ("diverged".into(), self.diagnostics.diverged.to_string()),
            ("dropped".into(), self.diagnostics.dropped.to_string()),
            ("unconfirmed".into(), self.diagnostics.unconfirmed.to_string()),
            ("wall clock (s)".into(), format!("{:.3}", self.wall_clock_seconds)),
            ("automaton hash".into(), self.automaton_hash.clone()),
            ("command".into(), self.command.clone()),
        ];
        for b in &self.bounds {
            rows.push((format!("bounds {}", b.name), format!("[{}, {}]", b.lo, b.hi)));
        }
        let w = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<w$}  {v}\n")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
