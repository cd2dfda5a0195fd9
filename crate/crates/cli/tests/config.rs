use std::path::PathBuf;

use nldiff_cli::{parse_config, parse_config_str, CliError, ExperimentConfig};
use proptest::prelude::*;

fn repo_config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn violations(text: &str) -> Vec<String> {
    match parse_config_str(text) {
        Err(CliError::Config(v)) => v,
        other => panic!("expected a configuration error, got {:?}", other.map(|c| c.output)),
    }
}

#[test]
fn shipped_configs_parse() {
    assert_eq!(parse_config(&repo_config("default.toml")).unwrap(), ExperimentConfig::default());
    let minimal = parse_config(&repo_config("minimal.toml")).unwrap();
    assert_eq!(minimal.kernel, nldiff_cli::config::KernelConfig::Poly3 { d: 1.0 });
    assert!(parse_config(&repo_config("cauchy.toml")).is_ok());
}

#[test]
fn unstable_time_step_is_named() {
    let v = violations("[evolution]\ndt = 0.9\nt_end = 9.0\nsnapshot_times = [9.0]\n");
    assert!(v.iter().any(|m| m.contains("stability")), "{v:?}");
}

#[test]
fn hole_away_from_the_origin_is_named() {
    let v = violations("[hole]\nintervals = [[-2.0, -1.0], [1.0, 2.0]]\n");
    assert!(v.iter().any(|m| m.starts_with("hole:") && m.contains("origin")), "{v:?}");
}

#[test]
fn violations_are_aggregated() {
    let text = "\
bogus = 1
[hole]
intervals = [[-2.0, -1.0], [1.0, 2.0]]
[evolution]
dt = 0.9
t_end = 9.0
snapshot_times = [9.0]
";
    let v = violations(text);
    assert!(v.iter().any(|m| m.contains("`bogus`")), "{v:?}");
    assert!(v.iter().any(|m| m.contains("origin")), "{v:?}");
    assert!(v.iter().any(|m| m.contains("stability")), "{v:?}");
}

#[test]
fn separated_holes_need_the_flag() {
    let text = "[kernel]\nfamily = \"poly3\"\nd = 1.0\n[hole]\nintervals = [[-3.0, -1.0], [1.0, 3.0]]\nseparated = true\n\
                [initial]\nkind = \"indicator\"\nleft = 4.0\nright = 5.0\namplitude = 1.0\n[verify]\nnear_probes = [5.0]\n";
    assert!(parse_config_str(text).is_ok());
    assert!(parse_config_str(&text.replace("separated = true\n", "")).is_err());
}

#[test]
fn truncation_margin_is_checked() {
    let v = violations("[evolution]\nt_end = 10000.0\nsnapshot_times = [100.0, 200.0, 400.0]\n");
    assert!(v.iter().any(|m| m.contains("truncation margin")), "{v:?}");
}

#[test]
fn type_errors_are_configuration_errors() {
    let e = parse_config_str("[grid]\nh = \"fine\"\n").unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(parse_config_str("[kernel]\nfamily = \"gauss\"\nd = 1.0\n").is_err());
}

/// Dotted paths of every key in a table, tables included.
fn key_paths(table: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        out.push(path.clone());
        if let toml::Value::Table(t) = v {
            key_paths(t, &path, out);
        }
    }
}

fn rename(table: &mut toml::Table, path: &[&str], new: &str) -> bool {
    match path {
        [last] => match table.remove(*last) {
            Some(v) => table.insert(new.to_string(), v).is_none(),
            None => false,
        },
        [head, rest @ ..] => match table.get_mut(*head) {
            Some(toml::Value::Table(t)) => rename(t, rest, new),
            _ => false,
        },
        [] => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn misspelled_keys_are_rejected(pick in any::<prop::sample::Index>(), pos in any::<prop::sample::Index>(), ch in "[a-z_]") {
        let text = std::fs::read_to_string(repo_config("default.toml")).unwrap();
        let mut table: toml::Table = toml::from_str(&text).unwrap();
        let mut paths = Vec::new();
        key_paths(&table, "", &mut paths);
        let path = pick.get(&paths).clone();
        let parts: Vec<&str> = path.split('.').collect();
        let name = *parts.last().unwrap();
        let at = pos.index(name.len() + 1);
        let mutated = format!("{}{}{}", &name[..at], ch, &name[at..]);
        prop_assume!(rename(&mut table, &parts, &mutated));
        let mut new_path = parts[..parts.len() - 1].join(".");
        if !new_path.is_empty() {
            new_path.push('.');
        }
        new_path.push_str(&mutated);
        let result = parse_config_str(&toml::to_string(&table).unwrap());
        match result {
            Err(CliError::Config(msgs)) => {
                // a renamed required field surfaces as a missing field of its section
                let wanted = format!("unknown key `{new_path}`");
                let missing = format!("{}: missing field `{name}`", parts[0]);
                if !matches!(name, "family" | "kind") {
                    prop_assert!(msgs.iter().any(|m| m == &wanted || m == &missing), "{wanted} not in {msgs:?}");
                }
            }
            other => prop_assert!(false, "mutated {path} -> {new_path} accepted: {:?}", other.map(|c| c.output)),
        }
    }
}
