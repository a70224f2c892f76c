//! Independent checks over a written trace, and re-execution.

use std::collections::BTreeMap;

use super::config::{Scenario, WorldConfig};
use super::sim::run;
use super::EngineError;

fn inv(line: usize, detail: impl Into<String>) -> EngineError {
    EngineError::TraceInvariant { line, detail: detail.into() }
}

fn num(line: usize, s: &str) -> Result<i128, EngineError> {
    s.parse::<i128>().map_err(|_| inv(line, format!("bad amount `{s}`")))
}

/// Rebuild balances from the trace alone: opening balances plus every
/// journal delta. Checks that reserves stay constant between messages,
/// that issuance matches mints less burns, and that the closing balances
/// agree with what the journal implies.
pub fn check_trace(text: &str) -> Result<(), EngineError> {
    let mut bal: BTreeMap<String, i128> = BTreeMap::new();
    let mut class: BTreeMap<String, String> = BTreeMap::new();
    let mut issued: i128 = 0;
    let mut closing: BTreeMap<String, i128> = BTreeMap::new();
    let mut closing_issued = None;
    let reserves = |bal: &BTreeMap<String, i128>, class: &BTreeMap<String, String>| -> i128 {
        bal.iter().filter(|(k, _)| class.get(*k).map(String::as_str) == Some("S")).map(|(_, v)| v).sum()
    };
    let mut opening_reserves = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let f: Vec<&str> = raw.split('|').collect();
        match f[..] {
            ["SEED", _] => {}
            ["OPEN", "issued", _, n] => issued = num(line, n)?,
            ["OPEN", id, c, n] => {
                bal.insert(id.to_string(), num(line, n)?);
                class.insert(id.to_string(), c.to_string());
            }
            ["BAL", "issued", _, n] => closing_issued = Some(num(line, n)?),
            ["BAL", id, _, n] => {
                closing.insert(id.to_string(), num(line, n)?);
            }
            ["ERR", ..] => {}
            [tag @ ("RTGS" | "FPS" | "BANK"), _, kind, acct, amt, _] => {
                let a = num(line, amt)?;
                let d = match kind {
                    "Debit" | "NetDebit" => -a,
                    "Credit" | "NetCredit" => a,
                    "Cleared" => 0,
                    k => return Err(inv(line, format!("unknown {tag} entry `{k}`"))),
                };
                let b = bal.get_mut(acct).ok_or_else(|| inv(line, format!("unknown account {acct}")))?;
                *b += d;
                if *b < 0 {
                    return Err(inv(line, format!("{acct} overdrawn")));
                }
            }
            [_, kind, wallet, amt, cp] if !kind.starts_with("M-") => {
                let a = num(line, amt)?;
                let mut apply = |w: &str, d: i128| -> Result<(), EngineError> {
                    let b = bal.get_mut(w).ok_or_else(|| inv(line, format!("unknown wallet {w}")))?;
                    *b += d;
                    if *b < 0 {
                        return Err(inv(line, format!("{w} overdrawn")));
                    }
                    Ok(())
                };
                match kind {
                    "Mint" if cp.starts_with("genesis:") => {}
                    "Mint" => {
                        apply(wallet, a)?;
                        issued += a;
                    }
                    "Burn" => {
                        apply(wallet, -a)?;
                        issued -= a;
                    }
                    "Transfer" => {
                        apply(wallet, -a)?;
                        apply(cp, a)?;
                    }
                    "LockPlaced" | "LockReleased" | "LockExpired" | "LockCancelled" => {}
                    k => return Err(inv(line, format!("unknown ledger entry `{k}`"))),
                }
            }
            [_, _, _, _, _, _] => {
                // A message boundary: reserves only move in balanced pairs.
                let r = reserves(&bal, &class);
                match opening_reserves {
                    None => opening_reserves = Some(r),
                    Some(o) if o != r => return Err(inv(line, format!("reserves {r}, opened at {o}"))),
                    Some(_) => {}
                }
            }
            _ => return Err(inv(line, format!("unrecognised line `{raw}`"))),
        }
    }
    if let Some(o) = opening_reserves {
        let r = reserves(&bal, &class);
        if o != r {
            return Err(inv(text.lines().count(), format!("reserves {r} at close, opened at {o}")));
        }
    }
    let end = text.lines().count();
    if let Some(ci) = closing_issued {
        if ci != issued {
            return Err(inv(end, format!("closing issuance {ci}, journal implies {issued}")));
        }
        let wallets: i128 = bal.iter().filter(|(k, _)| class.get(*k).map(String::as_str) == Some("W")).map(|(_, v)| v).sum();
        if wallets != issued {
            return Err(inv(end, format!("wallets hold {wallets}, issuance {issued}")));
        }
    }
    for (k, v) in &closing {
        let got = bal.get(k).copied().unwrap_or(0);
        if got != *v {
            return Err(inv(end, format!("{k} closes at {v}, journal implies {got}")));
        }
    }
    Ok(())
}

/// The seed recorded in a trace's `SEED` line.
pub fn trace_seed(text: &str) -> Option<u64> {
    text.lines().find_map(|l| l.strip_prefix("SEED|")).and_then(|s| s.parse().ok())
}

/// Check `text` independently, then re-run the scenario and compare line by
/// line. `seed` overrides the seed recorded in the trace.
pub fn replay(cfg: &WorldConfig, sc: &Scenario, text: &str, seed: Option<u64>) -> Result<(), EngineError> {
    check_trace(text)?;
    let seed = seed.or_else(|| trace_seed(text));
    let fresh = run(cfg, sc, seed)?.trace_text();
    let mut a = text.lines();
    let mut b = fresh.lines();
    let mut line = 0;
    loop {
        line += 1;
        match (a.next(), b.next()) {
            (None, None) => return Ok(()),
            (x, y) if x == y => {}
            (x, y) => {
                return Err(EngineError::TraceMismatch {
                    line,
                    expected: y.unwrap_or("<end>").to_string(),
                    found: x.unwrap_or("<end>").to_string(),
                })
            }
        }
    }
}
