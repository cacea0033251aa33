//! Plain-text tables for terminal output.

use std::fmt::Write;

use mono3d_core::metrics::{threshold_key, TpMetric};
use mono3d_core::{AssignMode, EvalReport};

use crate::commands::{mode_name, ModeBpr, RecallRow};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

pub fn evaluation(r: &EvalReport) -> String {
    let mut s = String::new();
    let keys: Vec<String> = r.ap_thresholds.iter().map(|&t| threshold_key(t)).collect();
    let _ = write!(s, "{:<22}{:>6}{:>7}", "class", "GTs", "preds");
    for k in &keys {
        let _ = write!(s, "{:>9}", format!("AP@{k}"));
    }
    for m in TpMetric::ALL {
        let _ = write!(s, "{:>8}", m.name().to_uppercase());
    }
    s.push('\n');
    for (name, c) in r.per_class.iter().filter(|(_, c)| c.num_gt + c.num_pred > 0) {
        let _ = write!(s, "{name:<22}{:>6}{:>7}", c.num_gt, c.num_pred);
        for k in &keys {
            let _ = write!(s, "{:>9.4}", c.ap[k]);
        }
        for m in TpMetric::ALL {
            let _ = write!(s, "{:>8}", opt(c.tp.get(m)));
        }
        s.push('\n');
    }
    s.push('\n');
    let _ = writeln!(s, "mAP   {:.4}", r.mean_ap);
    for m in TpMetric::ALL {
        let _ = writeln!(s, "m{:<5}{}", m.name().to_uppercase(), opt(r.mean_tp.get(m)));
    }
    let _ = writeln!(s, "NDS   {:.4}", r.nds);
    s
}

fn cell(r: Option<&RecallRow>) -> String {
    r.map_or_else(
        || "-".into(),
        |r| format!("{:.4} ({}/{})", r.bpr, r.recalled, r.total),
    )
}

pub fn bpr(results: &[(AssignMode, ModeBpr)], radius: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "best possible recall, center-sampling radius {radius}");
    let _ = write!(s, "{:<22}", "class");
    for (m, _) in results {
        let _ = write!(s, "{:>22}", mode_name(*m));
    }
    s.push('\n');
    let mut classes: Vec<&String> = results.iter().flat_map(|(_, r)| r.per_class.keys()).collect();
    classes.sort();
    classes.dedup();
    for c in classes {
        let _ = write!(s, "{c:<22}");
        for (_, r) in results {
            let _ = write!(s, "{:>22}", cell(r.per_class.get(c)));
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<22}", "overall");
    for (_, r) in results {
        let _ = write!(s, "{:>22}", cell(Some(&r.overall)));
    }
    s.push('\n');
    s
}
