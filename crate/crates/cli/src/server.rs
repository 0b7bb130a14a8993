//! Newline-delimited JSON environment server.
//!
//! Requests are one JSON object per line:
//! `{"cmd":"reset","seed":3,"alpha":0.5}`, `{"cmd":"step","action":[dx,dy,dz]}`
//! or `{"cmd":"close"}`. Replies to reset and step carry
//! `{obs, reward, done, info}`; anything that fails yields `{"error": ...}`
//! and the session stays open.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::thread;

use anyhow::{Context, Result};
use catmouse::env::{CatSource, Environment, EpisodeConfig};
use nalgebra::Vector3;
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
enum Request {
    Reset { seed: Option<u64>, alpha: Option<f64> },
    Step { action: [f64; 3] },
    Close,
}

/// Serves one client until `close` or end of input.
pub fn handle_session<R: BufRead, W: Write>(reader: R, mut writer: W, env: &mut Environment) -> Result<()> {
    let mut next_seed = env.config().seed;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (reply, close) = match serde_json::from_str::<Request>(&line) {
            Err(e) => (json!({ "error": format!("malformed request: {e}") }), false),
            Ok(Request::Close) => (json!({ "closed": true }), true),
            Ok(req) => (
                dispatch(req, env, &mut next_seed).unwrap_or_else(|e| json!({ "error": e.to_string() })),
                false,
            ),
        };
        serde_json::to_writer(&mut writer, &reply)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if close {
            break;
        }
    }
    Ok(())
}

fn dispatch(req: Request, env: &mut Environment, next_seed: &mut u64) -> Result<Value> {
    match req {
        Request::Reset { seed, alpha } => {
            if let Some(a) = alpha {
                env.set_alpha(a)?;
            }
            let seed = seed.unwrap_or(*next_seed);
            *next_seed = seed.wrapping_add(1);
            let obs = env.reset(seed)?;
            Ok(json!({
                "obs": obs.to_vec(),
                "reward": 0.0,
                "done": false,
                "info": {
                    "seed": seed,
                    "alpha": env.alpha(),
                    "max_steps": env.max_steps(),
                    "history_n": env.config().history_n,
                    "obs_len": obs.to_vec().len(),
                    "probs": env.probs(),
                },
            }))
        }
        Request::Step { action } => {
            let out = env.step(&Vector3::from(action))?;
            Ok(json!({
                "obs": out.obs.to_vec(),
                "reward": out.reward,
                "done": out.done,
                "info": out.info,
            }))
        }
        Request::Close => unreachable!("close is handled by the session loop"),
    }
}

/// Accepts connections forever, one environment and thread per client.
pub fn serve_listener(listener: TcpListener, cfg: EpisodeConfig, source: CatSource) -> Result<()> {
    cfg.validate()?;
    for stream in listener.incoming() {
        let stream = stream?;
        let cfg = cfg.clone();
        let source = source.clone();
        thread::spawn(move || -> Result<()> {
            let mut env = Environment::new(cfg, source)?;
            let reader = BufReader::new(stream.try_clone()?);
            handle_session(reader, stream, &mut env)
        });
    }
    Ok(())
}

pub fn serve_env(addr: impl ToSocketAddrs, cfg: EpisodeConfig, source: CatSource) -> Result<()> {
    let listener = TcpListener::bind(addr).context("binding server socket")?;
    eprintln!("listening on {}", listener.local_addr()?);
    serve_listener(listener, cfg, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(input: &str) -> Vec<Value> {
        let cfg = EpisodeConfig {
            max_steps: Some(3),
            ..EpisodeConfig::default()
        };
        let mut env = Environment::synthetic(cfg).unwrap();
        let mut out = Vec::new();
        handle_session(input.as_bytes(), &mut out, &mut env).unwrap();
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    #[test]
    fn reset_step_close() {
        let r = session(
            "{\"cmd\":\"reset\",\"seed\":4,\"alpha\":0.5}\n\
             {\"cmd\":\"step\",\"action\":[1.0,0.0,-1.0]}\n\
             \n\
             {\"cmd\":\"close\"}\n\
             {\"cmd\":\"step\",\"action\":[0,0,0]}\n",
        );
        assert_eq!(r.len(), 3);
        assert_eq!(r[0]["info"]["seed"], 4);
        assert_eq!(r[0]["info"]["alpha"], 0.5);
        assert_eq!(r[0]["obs"].as_array().unwrap().len(), 39);
        assert_eq!(r[0]["reward"], 0.0);
        assert_eq!(r[1]["info"]["step"], 1);
        assert!(r[1]["reward"].is_f64() && r[1]["done"] == false);
        assert_eq!(r[2]["closed"], true);
    }

    #[test]
    fn errors_keep_session_alive() {
        let r = session(
            "not json\n\
             {\"cmd\":\"fly\"}\n\
             {\"cmd\":\"step\",\"action\":[1,2]}\n\
             {\"cmd\":\"reset\",\"alpha\":-1}\n\
             {\"cmd\":\"reset\"}\n\
             {\"cmd\":\"step\",\"action\":[0,0,0]}\n\
             {\"cmd\":\"step\",\"action\":[0,0,0]}\n\
             {\"cmd\":\"step\",\"action\":[0,0,0]}\n\
             {\"cmd\":\"step\",\"action\":[0,0,0]}\n",
        );
        assert_eq!(r.len(), 9);
        for v in &r[..4] {
            assert!(v["error"].is_string(), "{v}");
        }
        assert!(r[4]["obs"].is_array());
        assert_eq!(r[7]["done"], true);
        assert!(r[8]["error"].as_str().unwrap().contains("protocol"));
    }

    #[test]
    fn same_seed_same_replies() {
        let script = "{\"cmd\":\"reset\",\"seed\":9}\n{\"cmd\":\"step\",\"action\":[0.5,0.5,0.5]}\n";
        assert_eq!(session(script), session(script));
    }
}
