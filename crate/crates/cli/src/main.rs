//! `xbase` command-line tool. Answers go to stdout, diagnostics to stderr.
//! Exit status is 0 on success, 1 for a bad request, 2 for storage or
//! network failure.

mod args;
mod error;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::Parser;

use xbase::caster::StoreCaster;
use xbase::frag::{Defragmenter, FragSchema, Fragmenter, RefMode, RootRef};
use xbase::home::{resolve_home, root_namer_at, root_store_at};
use xbase::namer::{Namer, PersistentNamer};
use xbase::net::{serve, ProxyFile, ProxyStore, RemoteStore};
use xbase::store::{inspect, KeyPolicy, Layout, LocalStore, Store};
use xbase::types::decode_hex;
use xbase::xml;
use xbase::{Key, Name};

use args::{Cli, Command, LayoutArg, ModeArg, PolicyArg, ProxyCommand, ValueSource};
use error::{CliError, EXIT_USER};

const PROXY_FILE: &str = "proxy.xml";

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USER),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xbase: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

struct Context {
    home: PathBuf,
    layout: Layout,
    policy: Option<KeyPolicy>,
}

/// The store a command operates on. `proxy` is kept so self-describing
/// references can be resolved through its targets.
struct Selected {
    store: Arc<dyn Store>,
    proxy: Option<Arc<ProxyStore>>,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, CliError> {
        let home = match &cli.home {
            Some(h) => h.clone(),
            None => resolve_home()?,
        };
        Ok(Context {
            home,
            layout: match cli.layout {
                LayoutArg::AppendLog => Layout::AppendLog,
                LayoutArg::FilePerKey => Layout::FilePerKey,
            },
            policy: cli.policy.map(|p| match p {
                PolicyArg::Random => KeyPolicy::random(),
                PolicyArg::Sequence => KeyPolicy::Sequence,
                PolicyArg::ContentHash => KeyPolicy::ContentHash,
            }),
        })
    }

    fn root_store(&self) -> Result<Arc<LocalStore>, CliError> {
        if self.policy.is_some_and(|p| p != KeyPolicy::ContentHash) {
            return Err(CliError::user("the root store always uses the content-hash policy"));
        }
        Ok(root_store_at(&self.home)?)
    }

    /// Opens a local store. Missing stores are created only when `create`.
    fn local_store(&self, spec: &str, create: bool) -> Result<Arc<LocalStore>, CliError> {
        if spec == "root" {
            return self.root_store();
        }
        let path = Path::new(spec);
        let store = match (inspect(path)?, self.policy) {
            (Some((layout, _)), Some(policy)) => LocalStore::open(path, layout, policy)?,
            (Some(_), None) => LocalStore::open_existing(path)?,
            (None, _) if !create => return Err(CliError::user(format!("no store at {}", path.display()))),
            (None, policy) => LocalStore::open(path, self.layout, policy.unwrap_or(KeyPolicy::ContentHash))?,
        };
        Ok(Arc::new(store))
    }

    fn store(&self, spec: &str, create: bool) -> Result<Selected, CliError> {
        if spec == "proxy" {
            let file = ProxyFile::load(&self.home.join(PROXY_FILE))?;
            let local: Arc<dyn Store> = self.root_store()?;
            let proxy = Arc::new(file.build(Some(local)));
            return Ok(Selected {
                store: proxy.clone(),
                proxy: Some(proxy),
            });
        }
        if spec != "root" && looks_remote(spec) && !Path::new(spec).exists() {
            return Ok(Selected {
                store: Arc::new(RemoteStore::new(spec)),
                proxy: None,
            });
        }
        Ok(Selected {
            store: self.local_store(spec, create)?,
            proxy: None,
        })
    }

    fn namer(&self, spec: &str, create: bool) -> Result<Arc<PersistentNamer>, CliError> {
        if spec == "root" {
            return Ok(root_namer_at(&self.home)?);
        }
        let path = Path::new(spec);
        if !create && !path.exists() {
            return Err(CliError::user(format!("no namer at {}", path.display())));
        }
        Ok(Arc::new(PersistentNamer::open(path)?))
    }
}

/// `host:port` with a numeric port and no path separators.
fn looks_remote(spec: &str) -> bool {
    match spec.rsplit_once(':') {
        Some((host, port)) => !host.is_empty() && !host.contains(['/', '\\']) && port.parse::<u16>().is_ok(),
        None => false,
    }
}

fn parse_key(text: &str) -> Result<Key, CliError> {
    Key::from_hex(text).map_err(|e| CliError::user(format!("bad key {text:?}: {e}")))
}

fn parse_name(text: &str) -> Result<Name, CliError> {
    Name::new(text).map_err(|e| CliError::user(format!("bad name {text:?}: {e}")))
}

fn read_value(src: &ValueSource) -> Result<Vec<u8>, CliError> {
    if let Some(h) = &src.hex {
        return decode_hex(h).map_err(|e| CliError::user(format!("bad --hex value: {e}")));
    }
    if let Some(f) = &src.file {
        return fs::read(f).map_err(|e| CliError::user(format!("cannot read {}: {e}", f.display())));
    }
    let mut buf = Vec::new();
    io::stdin().read_to_end(&mut buf)?;
    Ok(buf)
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::user(format!("cannot read {}: {e}", path.display())))
}

fn emit(bytes: &[u8]) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match out.write_all(bytes).and_then(|()| out.flush()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn emit_line(line: &str) -> Result<(), CliError> {
    emit(format!("{line}\n").as_bytes())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Context::new(&cli)?;
    match cli.command {
        Command::Put { value } => {
            let value = read_value(&value)?;
            let key = ctx.store(&cli.store, true)?.store.put(&value)?;
            emit_line(&key.to_hex())
        }
        Command::Get { key, out } => {
            let key = parse_key(&key)?;
            let value = ctx.store(&cli.store, false)?.store.get(&key)?;
            match out {
                Some(path) => Ok(fs::write(path, value)?),
                None => emit(&value),
            }
        }
        Command::PutWithKey { key, value } => {
            let key = parse_key(&key)?;
            let value = read_value(&value)?;
            Ok(ctx.store(&cli.store, true)?.store.put_with_key(&value, &key)?)
        }
        Command::StoreId => {
            let id = ctx.store(&cli.store, false)?.store.store_id()?;
            emit_line(&id.to_hex())
        }
        Command::Bind { name, key } => {
            let (name, key) = (parse_name(&name)?, parse_key(&key)?);
            Ok(ctx.namer(&cli.namer, true)?.bind(&name, &key)?)
        }
        Command::Unbind { name, key } => {
            let (name, key) = (parse_name(&name)?, parse_key(&key)?);
            Ok(ctx.namer(&cli.namer, false)?.unbind(&name, &key)?)
        }
        Command::Lookup { name } => {
            let name = parse_name(&name)?;
            print_keys(ctx.namer(&cli.namer, false)?.lookup(&name))
        }
        Command::LookupAsOf { name, seq } => {
            let name = parse_name(&name)?;
            print_keys(ctx.namer(&cli.namer, false)?.lookup_as_of(&name, seq)?)
        }
        Command::Serve { path, address } => {
            let selected = ctx.store(&path, true)?;
            let server = serve(selected.store, address.as_str())?;
            emit_line(&server.local_addr().to_string())?;
            server.wait();
            Ok(())
        }
        Command::Proxy(cmd) => proxy_command(&ctx, cmd),
        Command::Frag {
            doc,
            schema,
            mode,
            prefix,
        } => {
            let document =
                xml::parse(&read_input(&doc)?).map_err(|e| CliError::user(format!("{}: {e}", doc.display())))?;
            let schema = FragSchema::parse(&read_input(&schema)?)
                .map_err(|e| CliError::user(format!("{}: {e}", schema.display())))?;
            let mode = match mode {
                ModeArg::Key => RefMode::Key,
                ModeArg::Name => RefMode::Name,
                ModeArg::SelfDescribing => RefMode::SelfDescribing,
            };
            let selected = ctx.store(&cli.store, true)?;
            let prefix = match (mode, prefix) {
                (_, Some(p)) => Some(p),
                (RefMode::Name, None) => Some(
                    doc.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "doc".into()),
                ),
                _ => None,
            };
            let namer = match &prefix {
                Some(_) => Some(ctx.namer(&cli.namer, true)?),
                None => None,
            };
            let mut fragmenter = Fragmenter::new(&*selected.store, mode);
            if let (Some(n), Some(p)) = (&namer, prefix) {
                fragmenter = fragmenter.with_names(&**n, p);
            }
            let out = fragmenter.fragment(&document, &schema)?;
            emit_line(&out.root.to_string())
        }
        Command::Defrag { reference, name } => {
            let root = if name {
                RootRef::Name(parse_name(&reference)?)
            } else {
                match Key::from_hex(&reference) {
                    Ok(k) => RootRef::Key(k),
                    Err(_) => RootRef::Name(parse_name(&reference)?),
                }
            };
            let selected = ctx.store(&cli.store, false)?;
            let namer = ctx.namer(&cli.namer, true)?;
            let mut d = Defragmenter::new(&*selected.store).with_namer(&*namer);
            if let Some(p) = &selected.proxy {
                d = d.with_resolver(&**p);
            }
            let doc = d.defragment(&root)?;
            emit(&xml::serialize(&doc))
        }
        Command::ExportStore { path } => {
            if path == "proxy" || (looks_remote(&path) && !Path::new(&path).exists()) {
                return Err(CliError::user("export-store needs a local store path or `root`"));
            }
            let store = ctx.local_store(&path, false)?;
            emit(&StoreCaster.reify_snapshot(&store.snapshot()?))
        }
        Command::ImportStore { image, path } => {
            if path.exists() {
                return Err(CliError::user(format!("{} already exists", path.display())));
            }
            let snapshot = StoreCaster.reflect_snapshot(&read_input(&image)?)?;
            LocalStore::create_from_snapshot(&path, ctx.layout, &snapshot)?;
            Ok(())
        }
    }
}

fn print_keys(keys: impl IntoIterator<Item = Key>) -> Result<(), CliError> {
    let mut lines: Vec<String> = keys.into_iter().map(|k| k.to_hex()).collect();
    lines.sort();
    let mut text = String::new();
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    emit(text.as_bytes())
}

fn proxy_command(ctx: &Context, cmd: ProxyCommand) -> Result<(), CliError> {
    let path = ctx.home.join(PROXY_FILE);
    let mut file = ProxyFile::load(&path)?;
    match cmd {
        ProxyCommand::AddTarget { address } => {
            if !looks_remote(&address) {
                return Err(CliError::user(format!("{address:?} is not a host:port address")));
            }
            if file.targets.contains(&address) {
                return Err(CliError::user(format!("target {address} is already present")));
            }
            file.targets.push(address);
            Ok(file.save(&path)?)
        }
        ProxyCommand::RemoveTarget { address } => {
            let Some(pos) = file.targets.iter().position(|t| *t == address) else {
                return Err(CliError::user(format!("target {address} is not present")));
            };
            file.targets.remove(pos);
            Ok(file.save(&path)?)
        }
        ProxyCommand::List => {
            let mut text = String::new();
            for t in &file.targets {
                text.push_str(t);
                text.push('\n');
            }
            emit(text.as_bytes())
        }
    }
}
