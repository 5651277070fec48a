//! Command-line parsing with `--config FILE` defaults.
//!
//! Config entries are spliced into argv as `--key value` right after the
//! subcommand unless the same flag already appears on the command line.

use clap::error::ErrorKind;
use clap::{Arg, ArgAction, CommandFactory, Parser};

use crate::exit::CliError;
use crate::Cli;

pub fn parse(argv: &[String]) -> Result<Cli, CliError> {
    let argv = match find_config(argv) {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::config(format!("{path}: {e}")))?;
            splice(argv, &text).map_err(|m| CliError::config(format!("{path}: {m}")))?
        }
        None => argv.to_vec(),
    };
    Cli::try_parse_from(&argv).map_err(|e| {
        let _ = e.print();
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::new(0, ""),
            _ => CliError::usage(""),
        }
    })
}

fn find_config(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn given(argv: &[String], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefix = format!("{flag}=");
    argv.iter().any(|a| *a == flag || a.starts_with(&prefix))
}

fn splice(argv: &[String], text: &str) -> Result<Vec<String>, String> {
    let root = Cli::command();
    let names: Vec<String> = root
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let Some(pos) = argv
        .iter()
        .skip(1)
        .position(|a| names.contains(a))
        .map(|p| p + 1)
    else {
        // No subcommand: let clap report the usage error.
        return Ok(argv.to_vec());
    };
    let sub = root.find_subcommand(&argv[pos]).expect("listed above");
    let globals: Vec<&Arg> = root
        .get_arguments()
        .filter(|a| {
            a.get_long()
                .is_some_and(|l| l != "config" && l != "help" && l != "version")
        })
        .collect();
    let args: Vec<&Arg> = sub
        .get_arguments()
        .filter(|a| a.get_long().is_some_and(|l| l != "help"))
        .chain(globals)
        .collect();

    let pairs = irnet_core::model::parse_pairs(text).map_err(|e| e.to_string())?;
    let mut extra = Vec::new();
    for (key, value) in pairs {
        let long = key.replace('_', "-");
        let arg = args
            .iter()
            .find(|a| a.get_long() == Some(long.as_str()))
            .ok_or_else(|| format!("unknown config key {key:?} for `{}`", argv[pos]))?;
        if given(argv, &long) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => {
                let on: bool = value
                    .parse()
                    .map_err(|_| format!("{key} expects true or false, got {value:?}"))?;
                if on {
                    extra.push(format!("--{long}"));
                }
            }
            _ => {
                extra.push(format!("--{long}"));
                extra.extend(value.split_whitespace().map(str::to_string));
            }
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Command;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn flags_override_config() {
        let a = argv("irnet audit --channels 32");
        let spliced = splice(&a, "channels=48\nblocks=1\n# comment\nmode=itm").unwrap();
        let cli = Cli::try_parse_from(&spliced).unwrap();
        let Command::Audit(args) = cli.command else {
            panic!("wrong subcommand");
        };
        assert_eq!(args.model.channels, 32);
        assert_eq!(args.model.blocks, Some(1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let a = argv("irnet audit");
        assert!(splice(&a, "chanels=48").unwrap_err().contains("chanels"));
        // Keys of another subcommand are unknown here too.
        assert!(splice(&a, "epochs=3").is_err());
    }

    #[test]
    fn booleans_and_globals() {
        let a = argv("irnet train --out o --patches p");
        let spliced = splice(&a, "no_augment=true\nper-epoch-lr=false\nthreads=1").unwrap();
        let cli = Cli::try_parse_from(&spliced).unwrap();
        assert_eq!(cli.threads, Some(1));
        let Command::Train(t) = cli.command else {
            panic!("wrong subcommand");
        };
        assert!(t.no_augment && !t.per_epoch_lr);
        assert!(splice(&a, "no_augment=yes").is_err());
    }

    #[test]
    fn config_path_is_found() {
        assert_eq!(
            find_config(&argv("irnet --config c.txt audit")),
            Some("c.txt".into())
        );
        assert_eq!(
            find_config(&argv("irnet audit --config=x")),
            Some("x".into())
        );
        assert_eq!(find_config(&argv("irnet audit")), None);
    }
}
