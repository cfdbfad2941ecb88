// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use pasco::crypto::SigningKeyPair;
use pasco::device::load_or_create_key;
use pasco::sss::SssService;
use pasco_cli::exit_code;
use pasco_net::ServerHandle;

/// Secret storage service daemon.
#[derive(Parser)]
#[command(name = "pasco-sss", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8700")]
    listen: SocketAddr,
    /// Snapshot file holding the service state.
    #[arg(long)]
    state: PathBuf,
    /// Service signing key; created on first start. Defaults to the
    /// state path with a `.key` extension.
    #[arg(long)]
    key: Option<PathBuf>,
    /// Print the public key and exit.
    #[arg(long)]
    print_key: bool,
}

fn run(args: Args) -> pasco::Result<()> {
    let key_path = args.key.unwrap_or_else(|| args.state.with_extension("key"));
    let key = SigningKeyPair::from_seed(&load_or_create_key(&key_path)?)?;
    let public = hex::encode(key.public().0);
    if args.print_key {
        println!("{public}");
        return Ok(());
    }
    let service = SssService::open(&args.state, pasco::clock::system(), key)?;
    let server = ServerHandle::spawn(Arc::new(service), args.listen)?;
    println!("listening on {} key {public}", server.url());
    let _ = std::io::stdout().flush();
    server.wait();
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
