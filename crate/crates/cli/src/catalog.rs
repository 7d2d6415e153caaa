//! Built-in manifolds, potentials, tensors and plane-wave families.

use trajcomplete::ChartManifold;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Manifold,
    Potential,
    Tensor,
    Wave,
}

impl Kind {
    fn heading(self) -> &'static str {
        match self {
            Kind::Manifold => "manifolds",
            Kind::Potential => "potentials",
            Kind::Tensor => "tensors",
            Kind::Wave => "plane-wave families",
        }
    }
}

pub struct Entry {
    pub kind: Kind,
    pub signature: &'static str,
    pub summary: &'static str,
}

pub const ENTRIES: &[Entry] = &[
    Entry {
        kind: Kind::Manifold,
        signature: "euclidean(n)",
        summary: "flat R^n, complete",
    },
    Entry {
        kind: Kind::Manifold,
        signature: "hyperbolic_half_plane",
        summary: "x2 > 0 with metric (dx1^2 + dx2^2)/x2^2, complete",
    },
    Entry {
        kind: Kind::Manifold,
        signature: "metric([[g11, ...], ...]; guard; complete)",
        summary: "expression-defined metric in x1..xn; chart is where guard > 0",
    },
    Entry {
        kind: Kind::Potential,
        signature: "harmonic",
        summary: "V = r2/2",
    },
    Entry {
        kind: Kind::Potential,
        signature: "negative_quartic",
        summary: "V = -(x1^4 + ... + xn^4)",
    },
    Entry {
        kind: Kind::Potential,
        signature: "time_oscillator",
        summary: "V = exp(t) (1 + r2)",
    },
    Entry {
        kind: Kind::Potential,
        signature: "zero",
        summary: "V = 0, trajectories are geodesics",
    },
    Entry {
        kind: Kind::Potential,
        signature: "<expression in x1..xn, t, r2>",
        summary: "user-defined potential",
    },
    Entry {
        kind: Kind::Tensor,
        signature: "rotation(omega)",
        summary: "F = [[0, omega], [-omega, 0]] on a 2-dimensional base",
    },
    Entry {
        kind: Kind::Tensor,
        signature: "scaling(k)",
        summary: "F = k I",
    },
    Entry {
        kind: Kind::Tensor,
        signature: "[[F11, ...], ...]",
        summary: "expression-defined (1,1) tensor in x1..xn, t",
    },
    Entry {
        kind: Kind::Wave,
        signature: "plane_wave(f1,f2,f)",
        summary: "classical plane wave H = f1(u) x1^2 - f2(u) x2^2 + 2 f(u) x1 x2 on euclidean(2)",
    },
    Entry {
        kind: Kind::Wave,
        signature: "pp_wave(H)",
        summary: "profile H given as an expression in x1..xn, u, r2",
    },
    Entry {
        kind: Kind::Wave,
        signature: "quartic_wave",
        summary: "H = -r2^2",
    },
];

/// Alphabetized listing grouped by kind.
pub fn list_catalog() -> String {
    let mut out = String::new();
    for kind in [Kind::Manifold, Kind::Potential, Kind::Tensor, Kind::Wave] {
        out.push_str(kind.heading());
        out.push_str(":\n");
        let mut entries: Vec<&Entry> = ENTRIES.iter().filter(|e| e.kind == kind).collect();
        entries.sort_by_key(|e| e.signature);
        for e in entries {
            out.push_str(&format!("  {:<44} {}\n", e.signature, e.summary));
        }
    }
    out
}

/// Splits `name(a, b)` into the name and its numeric arguments.
pub fn split_call(spec: &str) -> Option<(&str, Vec<f64>)> {
    let spec = spec.trim();
    match spec.find('(') {
        None => {
            if spec.chars().all(|c| c.is_ascii_lowercase() || c == '_') && !spec.is_empty() {
                Some((spec, Vec::new()))
            } else {
                None
            }
        }
        Some(open) => {
            let inner = spec[open + 1..].strip_suffix(')')?;
            let args: Option<Vec<f64>> = inner.split(',').map(|a| a.trim().parse().ok()).collect();
            Some((&spec[..open], args?))
        }
    }
}

pub fn manifold(spec: &str) -> Result<ChartManifold, String> {
    match split_call(spec) {
        Some(("euclidean", args)) if args.len() == 1 && args[0] >= 1.0 && args[0].fract() == 0.0 => {
            Ok(ChartManifold::euclidean(args[0] as usize))
        }
        Some(("euclidean", _)) => Err("euclidean takes one positive integer argument".into()),
        Some(("hyperbolic_half_plane", args)) if args.is_empty() => Ok(ChartManifold::hyperbolic_half_plane()),
        _ => Err(format!("unknown manifold '{spec}'")),
    }
}

/// Expression text of a catalog potential on an `n`-dimensional base.
pub fn potential(spec: &str, n: usize) -> Option<String> {
    match spec.trim() {
        "harmonic" => Some("0.5 * r2".into()),
        "negative_quartic" => Some(format!(
            "-({})",
            (1..=n).map(|i| format!("x{i}^4")).collect::<Vec<_>>().join(" + ")
        )),
        "time_oscillator" => Some("exp(t) * (1 + r2)".into()),
        "zero" => Some("0".into()),
        _ => None,
    }
}

/// Expression matrix of a catalog tensor, or `Err` for a catalog name used wrongly.
pub fn tensor(spec: &str, n: usize) -> Option<Result<Vec<Vec<String>>, String>> {
    let (name, args) = split_call(spec)?;
    let out = match name {
        "rotation" => {
            if args.len() != 1 {
                Err("rotation takes one argument".to_string())
            } else if n != 2 {
                Err(format!("rotation needs a 2-dimensional base, got {n}"))
            } else {
                let w = args[0];
                Ok(vec![vec!["0".into(), format!("{w}")], vec![format!("{}", -w), "0".into()]])
            }
        }
        "scaling" => {
            if args.len() != 1 {
                Err("scaling takes one argument".to_string())
            } else {
                Ok((0..n)
                    .map(|i| (0..n).map(|j| if i == j { format!("{}", args[0]) } else { "0".into() }).collect())
                    .collect())
            }
        }
        _ => return None,
    };
    Some(out)
}

/// Expression text of a catalog wave profile.
pub fn wave_profile(spec: &str) -> Option<String> {
    match spec.trim() {
        "quartic_wave" => Some("-(r2^2)".into()),
        _ => None,
    }
}

pub fn plane_wave_profile(f1: &str, f2: &str, f: &str) -> String {
    format!("({f1}) * x1^2 - ({f2}) * x2^2 + 2 * ({f}) * x1 * x2")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_contains_required_entries() {
        let text = list_catalog();
        for needle in ["euclidean(n)", "plane_wave(f1,f2,f)", "hyperbolic_half_plane"] {
            assert!(text.contains(needle), "{needle}");
        }
        assert_eq!(text, list_catalog());
    }

    #[test]
    fn listing_is_alphabetized_within_groups() {
        let text = list_catalog();
        let mut group: Vec<String> = Vec::new();
        for line in text.lines() {
            if line.ends_with(':') {
                let mut sorted = group.clone();
                sorted.sort();
                assert_eq!(group, sorted);
                group.clear();
            } else {
                group.push(line.split_whitespace().next().unwrap().to_string());
            }
        }
    }

    #[test]
    fn resolves_catalog_names() {
        assert_eq!(manifold("euclidean(3)").unwrap().dim(), 3);
        assert_eq!(manifold("hyperbolic_half_plane").unwrap().dim(), 2);
        assert!(manifold("euclidean(0)").is_err());
        assert!(manifold("sphere").is_err());
        assert_eq!(potential("negative_quartic", 2).unwrap(), "-(x1^4 + x2^4)");
        assert!(potential("x1^2", 1).is_none());
        assert_eq!(tensor("rotation(2)", 2).unwrap().unwrap()[1][0], "-2");
        assert!(tensor("rotation(2)", 3).unwrap().is_err());
        assert!(tensor("[[1]]", 1).is_none());
        assert_eq!(split_call("scaling(0.5)"), Some(("scaling", vec![0.5])));
    }
}
