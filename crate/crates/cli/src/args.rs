use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "xbase", version, about = "Append-only stores, namers and XML fragments")]
pub struct Cli {
    /// Home directory for the root store, root namer and proxy settings
    /// [default: $XBASE_HOME, else the platform data directory + /xbase]
    #[arg(long, global = true, value_name = "DIR")]
    pub home: Option<PathBuf>,

    /// Store to operate on: `root`, a filesystem path, `host:port`, or `proxy`
    #[arg(long, global = true, default_value = "root", value_name = "STORE")]
    pub store: String,

    /// Namer to operate on: `root` or a filesystem path
    #[arg(long, global = true, default_value = "root", value_name = "NAMER")]
    pub namer: String,

    /// Layout used when a store path does not exist yet
    #[arg(long, global = true, value_enum, default_value_t = LayoutArg::AppendLog)]
    pub layout: LayoutArg,

    /// Key policy for a new store; checked against the header of an existing one
    #[arg(long, global = true, value_enum)]
    pub policy: Option<PolicyArg>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    AppendLog,
    FilePerKey,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Random,
    Sequence,
    ContentHash,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Key,
    Name,
    #[value(name = "self")]
    SelfDescribing,
}

/// Where a value comes from; stdin when neither flag is given.
#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct ValueSource {
    /// Value as hex digits
    #[arg(long, value_name = "HEX")]
    pub hex: Option<String>,

    /// Read the value from a file
    #[arg(long, value_name = "PATH")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Insert a value and print its key
    Put {
        #[command(flatten)]
        value: ValueSource,
    },
    /// Write the value bound to a key
    Get {
        key: String,
        /// Write to this file instead of stdout
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Insert a value under a chosen key
    PutWithKey {
        key: String,
        #[command(flatten)]
        value: ValueSource,
    },
    /// Print the store's id
    StoreId,
    /// Bind a name to a key
    Bind { name: String, key: String },
    /// Remove one binding of a name
    Unbind { name: String, key: String },
    /// Print the keys bound to a name, one per line, sorted
    Lookup { name: String },
    /// Print the keys bound to a name after the first SEQ namer records
    LookupAsOf { name: String, seq: u64 },
    /// Serve a store on a TCP address until interrupted
    Serve {
        /// Store path, or `root`
        path: String,
        /// host:port to listen on; port 0 picks a free port
        address: String,
    },
    /// Manage the persisted proxy target list
    #[command(subcommand)]
    Proxy(ProxyCommand),
    /// Fragment an XML document into the store and print its root reference
    Frag {
        doc: PathBuf,
        #[arg(long, value_name = "PATH")]
        schema: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Name prefix for fragment names [default: the document file stem]
        #[arg(long)]
        prefix: Option<String>,
    },
    /// Reassemble a fragmented document from its root key or name
    Defrag {
        #[arg(value_name = "REF")]
        reference: String,
        /// Treat REF as a name even if it looks like a hex key
        #[arg(long)]
        name: bool,
    },
    /// Print a store's contents as an XML image
    ExportStore {
        /// Store path, or `root`
        path: String,
    },
    /// Create a new store at PATH from an XML image
    ImportStore { image: PathBuf, path: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum ProxyCommand {
    /// Append a host:port target
    AddTarget { address: String },
    /// Remove a host:port target
    RemoveTarget { address: String },
    /// Print the targets in probe order
    List,
}
