// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

/// A `pasco-sss` process. Killed on drop.
pub struct SssProcess {
    child: Option<Child>,
    pub state: PathBuf,
    pub url: String,
    pub key_hex: String,
    port: u16,
}

impl SssProcess {
    pub fn start(dir: &Path, name: &str) -> SssProcess {
        Self::start_on(dir.join(format!("{name}.json")), 0)
    }

    fn start_on(state: PathBuf, port: u16) -> SssProcess {
        let mut child = Command::new(env!("CARGO_BIN_EXE_pasco-sss"))
            .args(["--listen", &format!("127.0.0.1:{port}"), "--state"])
            .arg(&state)
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn pasco-sss");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        // "listening on http://127.0.0.1:PORT key HEX"
        let parts: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(parts.len(), 5, "unexpected banner {line:?}");
        let url = parts[2].to_string();
        let port = url.rsplit(':').next().unwrap().parse().unwrap();
        SssProcess {
            child: Some(child),
            state,
            url,
            key_hex: parts[4].to_string(),
            port,
        }
    }

    pub fn kill(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }

    /// Starts again on the same port with the same state.
    pub fn restart(&mut self) {
        self.kill();
        let mut last = None;
        for _ in 0..50 {
            match std::panic::catch_unwind(|| Self::start_on(self.state.clone(), self.port)) {
                Ok(p) => {
                    assert_eq!(p.key_hex, self.key_hex);
                    *self = p;
                    return;
                }
                Err(e) => {
                    last = Some(e);
                    std::thread::sleep(std::time::Duration::from_millis(100));
                }
            }
        }
        std::panic::resume_unwind(last.unwrap());
    }

    pub fn endpoint(&self) -> pasco::transport::Endpoint {
        let key = pasco_cli::parse_public_key(&self.key_hex).unwrap();
        pasco::transport::Endpoint::new(&self.url, key).unwrap()
    }
}

impl Drop for SssProcess {
    fn drop(&mut self) {
        self.kill();
    }
}

/// One user device: its own profile, config and clipboard.
pub struct Device {
    pub home: PathBuf,
    pub config: PathBuf,
}

impl Device {
    pub fn new(dir: &Path, name: &str, services: &[&SssProcess]) -> Device {
        let home = dir.join(name);
        std::fs::create_dir_all(&home).unwrap();
        let mut text = String::new();
        for s in services {
            text.push_str(&format!("[[sss]]\nurl = \"{}\"\npinned_key = \"{}\"\n", s.url, s.key_hex));
        }
        let config = home.join("config.toml");
        std::fs::write(&config, text).unwrap();
        Device { home, config }
    }

    pub fn profile(&self) -> PathBuf {
        self.home.join("profile")
    }

    pub fn run(&self, args: &[&str]) -> Output {
        self.run_with(args, &[], None)
    }

    pub fn run_with(&self, args: &[&str], env: &[(&str, &str)], stdin: Option<&str>) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_pasco"));
        cmd.args(args)
            .env_clear()
            .env("HOME", &self.home)
            .env("PASCO_CONFIG", &self.config)
            .env("PASCO_PROFILE_PATH", self.profile())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        for (k, v) in env {
            cmd.env(k, v);
        }
        let mut child = cmd.spawn().expect("spawn pasco");
        {
            use std::io::Write;
            let mut input = child.stdin.take().unwrap();
            if let Some(text) = stdin {
                input.write_all(text.as_bytes()).unwrap();
            }
        }
        child.wait_with_output().unwrap()
    }

    /// Runs and asserts success, returning stdout.
    pub fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "pasco {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    /// `get --show` and returns the password.
    pub fn password(&self, url: &str) -> String {
        let out = self.ok(&["get", url, "--show"]);
        out.lines()
            .find_map(|l| l.strip_prefix("password: "))
            .expect("password line")
            .to_string()
    }
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}
