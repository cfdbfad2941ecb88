// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::{BufRead, Read};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pasco::client::{self, Client, DeviceProfile, ProfileLock, ProfileStore};
use pasco::clock::{self, SharedClock};
use pasco::crypto::Fingerprint;
use pasco::device::{BackupDevice, CardClient, DeviceConfig, SharedCard, SlotRole, StateFile};
use pasco::multi::{Outbox, WriteOutcome};
use pasco::password::{Password, PasswordPolicy};
use pasco::transport::{Endpoint, Transport};
use pasco::{Error, Result};
use pasco_cli::config::{self, Config};
use pasco_cli::exit_code;
use pasco_net::HttpTransport;

#[derive(Parser)]
#[command(name = "pasco", version, about = "Derived passwords with revocable device backups")]
struct Cli {
    /// Configuration file.
    #[arg(long, global = true, env = "PASCO_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a new secret and register this device.
    Setup,
    /// Print an enrollment payload for another device.
    Export,
    /// Join an existing portfolio with a payload from `export`.
    Enroll {
        /// Payload text, or `-` to read it from stdin.
        payload: String,
    },
    /// Add an account with a fresh salt.
    Add {
        url: String,
        #[arg(long, short)]
        user: String,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Regenerate the password of an account.
    Get {
        url: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Rotate the password of an account.
    Change {
        url: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Delete an account.
    Remove { url: String },
    /// List stored accounts.
    List,
    /// Replay writes a service missed while it was down.
    Reconcile,
    /// Manage backup devices and their keys.
    #[command(subcommand)]
    Backup(BackupCommand),
    /// Derive one password with an emergency slot.
    Emergency {
        url: String,
        #[command(flatten)]
        bd: DeviceArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Inspect or wipe a backup device.
    #[command(subcommand)]
    Device(DeviceCommand),
}

#[derive(Subcommand)]
enum BackupCommand {
    /// Provision a PIN slot on a backup device.
    Create {
        #[arg(long, value_enum, default_value_t = RoleArg::Restore)]
        role: RoleArg,
        /// Account readable by an emergency slot. Repeatable.
        #[arg(long = "acl")]
        acl: Vec<String>,
        #[command(flatten)]
        bd: DeviceArgs,
    },
    /// Recover the secret from a backup device onto this machine.
    Restore {
        #[command(flatten)]
        bd: DeviceArgs,
    },
    /// Revoke a backup key.
    Revoke { fingerprint: String },
    /// Replace the accounts an emergency key may read.
    Acl { fingerprint: String, urls: Vec<String> },
    /// Show registered keys.
    List,
}

#[derive(Subcommand)]
enum DeviceCommand {
    /// Show device status.
    Info {
        #[command(flatten)]
        bd: DeviceArgs,
    },
    /// Erase the device.
    Wipe {
        #[command(flatten)]
        bd: DeviceArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Restore,
    Emergency,
}

#[derive(Args)]
struct DeviceArgs {
    /// Backup device state file.
    #[arg(long, env = "PASCO_BD_PATH")]
    bd: PathBuf,
    /// Device PIN; read from stdin when absent.
    #[arg(long, env = "PASCO_PIN", hide_env_values = true)]
    pin: Option<String>,
    /// PBKDF2 iterations for new PIN slots.
    #[arg(long, default_value_t = DeviceConfig::default().pin_iterations, hide = true)]
    pin_iterations: u32,
}

#[derive(Args)]
struct PolicyArgs {
    /// Password policy JSON file.
    #[arg(long, conflicts_with = "policy_json")]
    policy: Option<PathBuf>,
    /// Password policy as inline JSON.
    #[arg(long)]
    policy_json: Option<String>,
}

#[derive(Args)]
struct OutputArgs {
    /// Print the password instead of writing the clipboard file.
    #[arg(long)]
    show: bool,
}

struct Env {
    config: Config,
    profile_path: PathBuf,
    clock: SharedClock,
    transport: Arc<dyn Transport>,
}

impl Env {
    fn load(cli: &Cli) -> Result<Env> {
        let path = cli.config.clone().unwrap_or_else(config::default_config_path);
        let config = Config::load(&path)?;
        let profile_path = config.profile_path(std::env::var(config::ENV_PROFILE_PATH).ok().as_deref());
        Ok(Env {
            config,
            profile_path,
            clock: clock::system(),
            transport: Arc::new(HttpTransport::default()),
        })
    }

    fn store(&self) -> ProfileStore {
        ProfileStore::new(&self.profile_path)
    }

    fn endpoints(&self) -> Result<Vec<Endpoint>> {
        self.config.endpoints(std::env::var(config::ENV_SSS_URL).ok().as_deref())
    }

    /// Locks and loads the profile and builds a client around it.
    fn client(&self) -> Result<(Client, ProfileLock)> {
        let store = self.store();
        let lock = store.lock()?;
        let profile = store.load(&lock)?;
        let outbox = Outbox::open(self.config.outbox_path(&self.profile_path))?;
        let client = Client::new(profile, self.transport.clone(), self.clock.clone(), outbox)?;
        Ok((client, lock))
    }

    fn save_new(&self, profile: &DeviceProfile) -> Result<()> {
        let store = self.store();
        let lock = store.lock()?;
        store.create(&lock, profile)
    }

    fn emit(&self, url: &str, user: &str, password: &Password, out: &OutputArgs) -> Result<()> {
        println!("user: {user}");
        if out.show {
            println!("password: {}", password.as_str());
            return Ok(());
        }
        let path = self.config.clipboard_path(&self.profile_path);
        pasco::device::write_atomic_file(&path, password.as_str().as_bytes())?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o600))
                .map_err(|e| Error::Storage(e.to_string()))?;
        }
        println!("password for {url} written to {}", path.display());
        Ok(())
    }
}

impl DeviceArgs {
    fn card(&self) -> Result<SharedCard> {
        let file = StateFile::with_key_file(&self.bd, &self.bd.with_extension("key"))?;
        let config = DeviceConfig {
            pin_iterations: self.pin_iterations,
        };
        Ok(SharedCard::new(BackupDevice::open(file, config, clock::system())?))
    }

    fn pin(&self) -> Result<String> {
        if let Some(pin) = &self.pin {
            return Ok(pin.clone());
        }
        eprint!("PIN: ");
        let mut line = String::new();
        std::io::stdin()
            .lock()
            .read_line(&mut line)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(line.trim_end_matches(['\r', '\n']).to_string())
    }
}

impl PolicyArgs {
    fn policy(&self) -> Result<PasswordPolicy> {
        if let Some(path) = &self.policy {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Storage(format!("{}: {e}", path.display())))?;
            return PasswordPolicy::from_json(&text);
        }
        match &self.policy_json {
            Some(json) => PasswordPolicy::from_json(json),
            None => Ok(PasswordPolicy::default()),
        }
    }
}

fn report(outcome: &WriteOutcome) {
    if let WriteOutcome::Degraded { missed } = outcome {
        eprintln!(
            "warning: {} unreachable; run `pasco reconcile` once it is back",
            missed.join(", ")
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let env = Env::load(&cli)?;
    match cli.command {
        Command::Setup => {
            let store = env.store();
            let lock = store.lock()?;
            if store.exists() {
                return Err(Error::Conflict(format!("a profile already exists at {}", store.path().display())));
            }
            let profile = client::first_time_setup(env.endpoints()?, &*env.transport, &env.clock)?;
            store.create(&lock, &profile)?;
            println!("profile created at {}", store.path().display());
        }
        Command::Export => {
            let (client, _lock) = env.client()?;
            println!("{}", client.export_enrollment()?);
        }
        Command::Enroll { payload } => {
            let payload = if payload == "-" {
                let mut s = String::new();
                std::io::stdin()
                    .read_to_string(&mut s)
                    .map_err(|e| Error::invalid(e.to_string()))?;
                s
            } else {
                payload
            };
            if env.store().exists() {
                return Err(Error::Conflict("this device already has a profile".into()));
            }
            let profile = client::enroll_new_device(payload.trim(), &env.endpoints()?, &*env.transport, &env.clock)?;
            env.save_new(&profile)?;
            println!("device enrolled");
        }
        Command::Add { url, user, policy } => {
            let policy = policy.policy()?;
            let (mut client, _lock) = env.client()?;
            let (id, outcome) = client.add_account(&url, &user, policy)?;
            report(&outcome);
            println!("added {} ({})", pasco::account::canonicalize_url(&url)?, id.to_base64());
        }
        Command::Get { url, out } => {
            let (client, _lock) = env.client()?;
            let (user, password) = client.get_password(&url)?;
            env.emit(&url, &user, &password, &out)?;
        }
        Command::Change { url, out } => {
            let (mut client, _lock) = env.client()?;
            let (password, outcome) = client.change_password(&url)?;
            report(&outcome);
            let user = client.account(&url).map(|a| a.username).unwrap_or_default();
            env.emit(&url, &user, &password, &out)?;
        }
        Command::Remove { url } => {
            let (mut client, _lock) = env.client()?;
            report(&client.remove_account(&url)?);
            println!("removed {}", pasco::account::canonicalize_url(&url)?);
        }
        Command::List => {
            let (client, _lock) = env.client()?;
            for account in client.list_accounts()? {
                println!("{}\t{}", account.url(), account.username);
            }
        }
        Command::Reconcile => {
            let (mut client, _lock) = env.client()?;
            let r = client.reconcile()?;
            println!("applied {} pending writes, {} remaining", r.applied, r.remaining);
        }
        Command::Backup(cmd) => backup(&env, cmd)?,
        Command::Emergency { url, bd, out } => {
            let card = bd.card()?;
            let (user, password) = client::emergency_password(&card, &bd.pin()?, &url, &*env.transport)?;
            env.emit(&url, &user, &password, &out)?;
        }
        Command::Device(DeviceCommand::Info { bd }) => {
            let card = bd.card()?;
            let info = CardClient::new(&card).info()?;
            println!("status: {:?}", info.status);
            println!("retries left: {}", info.retries_left);
            println!("slots: {}", info.slots.iter().map(|r| format!("{r:?}")).collect::<Vec<_>>().join(", "));
            println!("services: {}", info.endpoints.join(", "));
        }
        Command::Device(DeviceCommand::Wipe { bd }) => {
            CardClient::new(&bd.card()?).wipe()?;
            println!("device wiped");
        }
    }
    Ok(())
}

fn backup(env: &Env, cmd: BackupCommand) -> Result<()> {
    match cmd {
        BackupCommand::Create { role, acl, bd } => {
            let role = match role {
                RoleArg::Restore => SlotRole::Restore,
                RoleArg::Emergency => SlotRole::Emergency,
            };
            if role == SlotRole::Restore && !acl.is_empty() {
                return Err(Error::invalid("--acl applies to emergency slots only"));
            }
            let (client, _lock) = env.client()?;
            let card = bd.card()?;
            let fps = client.create_backup(&card, &bd.pin()?, role, &acl)?;
            for (endpoint, fp) in client.profile().endpoints.iter().zip(&fps) {
                println!("{}\t{}", endpoint.url, fp.to_hex());
            }
        }
        BackupCommand::Restore { bd } => {
            let store = env.store();
            let lock = store.lock()?;
            if store.exists() {
                return Err(Error::Conflict("this device already has a profile".into()));
            }
            let card = bd.card()?;
            let profile = client::restore_from_backup(&card, &bd.pin()?, &env.endpoints()?, &*env.transport, &env.clock)?;
            store.create(&lock, &profile)?;
            println!("profile restored to {}", store.path().display());
        }
        BackupCommand::Revoke { fingerprint } => {
            let (client, _lock) = env.client()?;
            client.revoke_backup(&Fingerprint::from_hex(&fingerprint)?)?;
            println!("revoked {fingerprint}");
        }
        BackupCommand::Acl { fingerprint, urls } => {
            let (client, _lock) = env.client()?;
            client.set_acl(&Fingerprint::from_hex(&fingerprint)?, &urls)?;
            println!("updated {fingerprint}");
        }
        BackupCommand::List => {
            let (client, _lock) = env.client()?;
            for (url, key) in client.list_keys()? {
                println!(
                    "{url}\t{}\t{}\t{}",
                    key.fingerprint.to_hex(),
                    key.role.as_str(),
                    if key.has_otp { "pad" } else { "-" }
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

