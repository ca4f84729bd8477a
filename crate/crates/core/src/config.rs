//! Line-oriented parsers for the two config dialects: topology files
//! (nodes, links, physics directives) and sweep files (a parameter grid
//! of scenario points over shared defaults).
//!
//! Both dialects are whitespace-token based; `#` starts a comment. Every
//! parse failure reports the 1-based line it happened on.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::harness::{ScenarioConfig, SweepFile, SweepPoint};
use crate::topology::{
    BlackoutModel, BlackoutWindow, Coverage, LinkSpec, NodeId, Tier, Topology, TIER_SIZES,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
}

fn syntax(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, tok: &str, what: &str) -> Result<f64, ConfigError> {
    tok.parse::<f64>()
        .map_err(|_| syntax(line, format!("{what} must be a number, got `{tok}`")))
}

enum DelayToken {
    Millis(f64),
    MarsConfigured,
}

/// Parse a topology config. `mars_override`, when given, replaces the
/// file's `mars_one_way_s` for every `mars`-delay link.
pub fn parse_topology(text: &str, mars_override: Option<f64>) -> Result<Topology, ConfigError> {
    let mut coverage = Coverage::Full;
    let mut mars_one_way: Option<f64> = None;
    let mut jitter = 0.0f64;
    let mut processing_delay = 0.0f64;
    let mut repeater_delay_factor = 1.0f64;
    let mut repeater_labels: Vec<(usize, String)> = Vec::new();
    let mut proposer_label: Option<(usize, String)> = None;
    let mut crash_order_labels: Vec<(usize, String)> = Vec::new();
    let mut nodes: Vec<(usize, Tier, String)> = Vec::new();
    let mut raw_links: Vec<(usize, String, String, DelayToken)> = Vec::new();
    let mut blackouts: Vec<BlackoutWindow> = Vec::new();
    let mut crash_stanzas: Vec<(usize, String, f64)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let args = &toks[1..];
        let want = |n: usize| -> Result<(), ConfigError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(syntax(
                    line,
                    format!("`{}` takes {n} argument(s), got {}", toks[0], args.len()),
                ))
            }
        };
        match toks[0] {
            "coverage" => {
                want(1)?;
                coverage = Coverage::from_name(args[0])
                    .ok_or_else(|| syntax(line, format!("unknown coverage `{}`", args[0])))?;
            }
            "mars_one_way_s" => {
                want(1)?;
                let v = parse_f64(line, args[0], "mars_one_way_s")?;
                if v <= 0.0 {
                    return Err(syntax(line, "mars_one_way_s must be positive"));
                }
                mars_one_way = Some(v);
            }
            "jitter" => {
                want(1)?;
                let v = parse_f64(line, args[0], "jitter")?;
                if !(0.0..1.0).contains(&v) {
                    return Err(syntax(line, "jitter must lie in [0, 1)"));
                }
                jitter = v;
            }
            "processing_delay_ms" => {
                want(1)?;
                let v = parse_f64(line, args[0], "processing_delay_ms")?;
                if v < 0.0 {
                    return Err(syntax(line, "processing_delay_ms must be non-negative"));
                }
                processing_delay = v / 1000.0;
            }
            "repeater_delay_factor" => {
                want(1)?;
                let v = parse_f64(line, args[0], "repeater_delay_factor")?;
                if v < 1.0 {
                    return Err(syntax(line, "repeater_delay_factor must be at least 1"));
                }
                repeater_delay_factor = v;
            }
            "repeater_station" => {
                want(1)?;
                repeater_labels.push((line, args[0].to_string()));
            }
            "proposer_site" => {
                want(1)?;
                proposer_label = Some((line, args[0].to_string()));
            }
            "crash_order" => {
                if args.is_empty() {
                    return Err(syntax(line, "`crash_order` needs at least one node label"));
                }
                for a in args {
                    crash_order_labels.push((line, a.to_string()));
                }
            }
            "node" => {
                want(2)?;
                let tier = Tier::from_name(args[0])
                    .ok_or_else(|| syntax(line, format!("unknown tier `{}`", args[0])))?;
                nodes.push((line, tier, args[1].to_string()));
            }
            "link" => {
                want(3)?;
                let delay = if args[2] == "mars" {
                    DelayToken::MarsConfigured
                } else {
                    let ms = parse_f64(line, args[2], "link delay (ms)")?;
                    if ms <= 0.0 {
                        return Err(syntax(line, "link delay must be positive"));
                    }
                    DelayToken::Millis(ms)
                };
                raw_links.push((line, args[0].to_string(), args[1].to_string(), delay));
            }
            "blackout" => {
                want(4)?;
                let start = parse_f64(line, args[0], "blackout start")?;
                let duration = parse_f64(line, args[1], "blackout duration")?;
                let model = BlackoutModel::from_name(args[2])
                    .ok_or_else(|| syntax(line, format!("unknown blackout model `{}`", args[2])))?;
                let severed_tier = Tier::from_name(args[3])
                    .ok_or_else(|| syntax(line, format!("unknown tier `{}`", args[3])))?;
                blackouts.push(BlackoutWindow {
                    start,
                    duration,
                    model,
                    severed_tier,
                });
            }
            "crash" => {
                want(2)?;
                let time = parse_f64(line, args[1], "crash time")?;
                crash_stanzas.push((line, args[0].to_string(), time));
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    // Assign node identities tier by tier, in declaration order.
    let mut counts = [0usize; TIER_SIZES.len()];
    let mut labels = vec![String::new(); crate::topology::NODE_COUNT];
    let mut by_label: BTreeMap<String, NodeId> = BTreeMap::new();
    for (line, tier, label) in &nodes {
        let slot = counts[tier.index()];
        if slot >= tier.size() {
            return Err(syntax(
                *line,
                format!("tier {tier} holds {} node(s); `{label}` is one too many", tier.size()),
            ));
        }
        let id = NodeId::new(*tier, slot as u8);
        counts[tier.index()] += 1;
        if by_label.insert(label.clone(), id).is_some() {
            return Err(syntax(*line, format!("duplicate node label `{label}`")));
        }
        labels[id.bit()] = label.clone();
    }
    for tier in Tier::ALL {
        if counts[tier.index()] != tier.size() {
            return Err(syntax(
                text.lines().count(),
                format!(
                    "tier {tier} needs exactly {} node(s), got {}",
                    tier.size(),
                    counts[tier.index()]
                ),
            ));
        }
    }
    let lookup = |line: usize, label: &str| -> Result<NodeId, ConfigError> {
        by_label
            .get(label)
            .copied()
            .ok_or_else(|| syntax(line, format!("unknown node label `{label}`")))
    };

    let mars_one_way = mars_override.or(mars_one_way);
    let mut links: BTreeMap<(usize, usize), LinkSpec> = BTreeMap::new();
    for (line, a, b, delay) in &raw_links {
        let (na, nb) = (lookup(*line, a)?, lookup(*line, b)?);
        if na == nb {
            return Err(syntax(*line, format!("`{a}` cannot link to itself")));
        }
        let one_way_delay = match delay {
            DelayToken::Millis(ms) => ms / 1000.0,
            DelayToken::MarsConfigured => mars_one_way
                .ok_or_else(|| syntax(*line, "`mars` delay used but mars_one_way_s is not set"))?,
        };
        let key = (na.bit().min(nb.bit()), na.bit().max(nb.bit()));
        if links
            .insert(
                key,
                LinkSpec {
                    one_way_delay,
                    jitter_fraction: jitter,
                },
            )
            .is_some()
        {
            return Err(syntax(*line, format!("duplicate link `{a}`-`{b}`")));
        }
    }

    let proposer_site = match proposer_label {
        Some((line, label)) => lookup(line, &label)?,
        None => NodeId::new(Tier::Earth, 0),
    };
    let mut repeater_stations = Vec::new();
    for (line, label) in &repeater_labels {
        repeater_stations.push(lookup(*line, label)?);
    }
    let mut crash_order = Vec::new();
    for (line, label) in &crash_order_labels {
        crash_order.push(lookup(*line, label)?);
    }
    let mut crashed: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (line, label, time) in &crash_stanzas {
        crashed.insert(lookup(*line, label)?, *time);
    }

    Ok(Topology::from_parts(
        labels,
        links,
        coverage,
        mars_one_way.unwrap_or(0.0),
        processing_delay,
        repeater_delay_factor,
        repeater_stations,
        proposer_site,
        crash_order,
        blackouts,
        crashed,
    ))
}

/// Parse a sweep file: a `family` name, `default key=value` lines that
/// accumulate onto the scenario defaults, and one `point key=value...`
/// line per scenario.
pub fn parse_sweep(text: &str) -> Result<SweepFile, ConfigError> {
    let mut family: Option<String> = None;
    let mut defaults = ScenarioConfig::default();
    let mut points: Vec<SweepPoint> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        match toks[0] {
            "family" => {
                if toks.len() != 2 {
                    return Err(syntax(line, "`family` takes exactly one name"));
                }
                family = Some(toks[1].to_string());
            }
            "default" => {
                for kv in &toks[1..] {
                    apply_kv(&mut defaults, kv).map_err(|m| syntax(line, m))?;
                }
            }
            "point" => {
                let mut cfg = defaults.clone();
                for kv in &toks[1..] {
                    apply_kv(&mut cfg, kv).map_err(|m| syntax(line, m))?;
                }
                points.push(SweepPoint {
                    emit_local_row: cfg.measure_locals,
                    config: cfg,
                });
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    let family = family.ok_or_else(|| syntax(1, "sweep file has no `family` directive"))?;
    if points.is_empty() {
        return Err(syntax(text.lines().count(), "sweep file declares no points"));
    }
    for p in &mut points {
        p.config.scenario_id = p.config.compute_id(&family);
    }
    Ok(SweepFile { family, points })
}

fn apply_kv(cfg: &mut ScenarioConfig, kv: &str) -> Result<(), String> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
    let bad = |what: &str| format!("bad value `{value}` for `{key}` ({what})");
    let num = |what: &str| value.parse::<f64>().map_err(|_| bad(what));
    match key {
        "construction" => {
            cfg.construction =
                crate::harness::Construction::from_name(value).ok_or_else(|| bad("flat|wall"))?;
        }
        "tier" => cfg.tier = Tier::from_name(value).ok_or_else(|| bad("earth|leo|moon|mars"))?,
        "coverage" => {
            cfg.coverage = Coverage::from_name(value).ok_or_else(|| bad("full|sparse"))?;
        }
        "mars_delay_s" => cfg.mars_delay = num("seconds")?,
        "blackout_start_s" => cfg.blackout_start = num("seconds")?,
        "blackout_s" => cfg.blackout_duration = num("seconds")?,
        "blackout_model" => {
            cfg.blackout_model =
                BlackoutModel::from_name(value).ok_or_else(|| bad("hard|repeater"))?;
        }
        "global_k" => {
            cfg.global_k = value.parse::<u32>().map_err(|_| bad("integer"))?;
        }
        "local_scope" => {
            cfg.local_scope =
                crate::quorum::LocalScope::from_name(value).ok_or_else(|| bad("std|maj"))?;
        }
        "measure_locals" => {
            cfg.measure_locals = match value {
                "on" => true,
                "off" => false,
                _ => return Err(bad("on|off")),
            };
        }
        "crashes" => cfg.crashes = value.parse::<u32>().map_err(|_| bad("integer"))?,
        "round_budget_s" => cfg.round_budget = num("seconds")?,
        "local_round_budget_s" => cfg.local_round_budget = num("seconds")?,
        "reconciliation_s" => cfg.reconciliation = num("seconds")?,
        "sim_end_s" => cfg.sim_end = num("seconds")?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Construction;
    use crate::quorum::LocalScope;

    const MINI_NODES: &str = "
node earth A
node earth B
node earth C
node earth D
node earth E
node leo  L
node moon U
node mars M1
node mars M2
node mars M3
";

    fn mini(extra: &str) -> String {
        format!("coverage full\nmars_one_way_s 100\n{MINI_NODES}\n{extra}\n")
    }

    #[test]
    fn minimal_topology_parses_with_defaults() {
        let t = parse_topology(&mini("link A B 70"), None).unwrap();
        assert_eq!(t.link_count(), 1);
        assert_eq!(t.mars_one_way(), 100.0);
        let (a, b) = (t.node_by_label("A").unwrap(), t.node_by_label("B").unwrap());
        assert!((t.link(a, b).unwrap().one_way_delay - 0.07).abs() < 1e-12);
        // No jitter directive means zero jitter.
        assert_eq!(t.link(a, b).unwrap().jitter_fraction, 0.0);
        // No proposer directive means the first Earth node.
        assert_eq!(t.proposer_site(), a);
    }

    #[test]
    fn mars_token_resolves_to_override_before_file_value() {
        let text = mini("link M1 A mars");
        let t = parse_topology(&text, Some(250.0)).unwrap();
        let (m, a) = (t.node_by_label("M1").unwrap(), t.node_by_label("A").unwrap());
        assert_eq!(t.link(m, a).unwrap().one_way_delay, 250.0);
        let t = parse_topology(&text, None).unwrap();
        assert_eq!(t.link(m, a).unwrap().one_way_delay, 100.0);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let cases: Vec<(String, &str)> = vec![
            (mini("frobnicate 1"), "unknown directive"),
            (mini("link A A 10"), "cannot link to itself"),
            (mini("link A B 10\nlink B A 20"), "duplicate link"),
            (mini("link A Z 10"), "unknown node label"),
            (mini("link A B ten"), "must be a number"),
            (mini("link A B -4"), "must be positive"),
            (mini("node earth F"), "one too many"),
            (mini("jitter 1.5"), "jitter must lie in [0, 1)"),
            ("coverage full\nnode earth A".to_string(), "needs exactly"),
        ];
        for (text, needle) in cases {
            let err = parse_topology(&text, None).unwrap_err();
            let ConfigError::Syntax { line, message } = err;
            assert!(message.contains(needle), "`{message}` missing `{needle}`");
            assert!(line >= 1);
        }
    }

    #[test]
    fn blackout_and_crash_stanzas_apply() {
        let t = parse_topology(
            &mini("link A B 70\nblackout 600 900 hard mars\ncrash B 550"),
            None,
        )
        .unwrap();
        let b = t.node_by_label("B").unwrap();
        assert!(t.is_crashed(b, 550.0));
        assert!(!t.is_crashed(b, 549.0));
    }

    #[test]
    fn sweep_defaults_flow_into_points_and_points_override() {
        let text = "
family demo
default global_k=4 coverage=sparse
default blackout_s=300
point construction=flat
point construction=wall global_k=3 local_scope=maj measure_locals=on
";
        let f = parse_sweep(text).unwrap();
        assert_eq!(f.family, "demo");
        assert_eq!(f.points.len(), 2);
        let a = &f.points[0].config;
        assert_eq!(a.construction, Construction::Flat);
        assert_eq!(a.global_k, 4);
        assert_eq!(a.blackout_duration, 300.0);
        assert!(!f.points[0].emit_local_row);
        let b = &f.points[1].config;
        assert_eq!(b.global_k, 3);
        assert_eq!(b.local_scope, LocalScope::EarthMaj);
        assert!(f.points[1].emit_local_row);
        assert!(b.scenario_id.starts_with("demo:wall:"), "{}", b.scenario_id);
        assert_ne!(a.scenario_id, b.scenario_id);
    }

    #[test]
    fn sweep_rejects_unknown_keys_and_missing_family() {
        let err = parse_sweep("family x\npoint sneaky=1\n").unwrap_err();
        let ConfigError::Syntax { line, message } = err;
        assert_eq!(line, 2);
        assert!(message.contains("unknown key"));
        assert!(parse_sweep("point global_k=5\n").is_err());
        assert!(parse_sweep("family empty\n").is_err());
    }
}
