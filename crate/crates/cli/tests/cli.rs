use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use xbase::caster::StoreCaster;
use xbase::namer::{Namer, PersistentNamer};
use xbase::store::LocalStore;
use xbase::{Key, Name};

fn xbase(home: &Path, args: &[&str]) -> Output {
    xbase_with_input(home, args, b"")
}

fn xbase_with_input(home: &Path, args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_xbase"))
        .arg("--home")
        .arg(home)
        .args(args)
        .env_remove("XBASE_HOME")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn line(out: Output) -> String {
    ok(out).trim_end().to_string()
}

struct Served(Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(home: &Path, store: &str) -> (Served, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_xbase"))
        .arg("--home")
        .arg(home)
        .args(["serve", store, "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut first)
        .unwrap();
    (Served(child), first.trim().to_string())
}

#[test]
fn put_then_get_sequence_store() {
    let home = tempfile::tempdir().unwrap();
    let store = home.path().join("seq.log");
    let s = store.to_str().unwrap();
    let key = line(xbase(
        home.path(),
        &["--store", s, "--policy", "sequence", "put", "--hex", "DEADBEEF"],
    ));
    assert_eq!(key, "0000000000000001");
    let out = xbase(home.path(), &["--store", s, "get", "0000000000000001"]);
    assert!(out.status.success());
    assert_eq!(out.stdout, [0xDE, 0xAD, 0xBE, 0xEF]);
}

#[test]
fn value_sources() {
    let home = tempfile::tempdir().unwrap();
    let file = home.path().join("v.bin");
    fs::write(&file, b"from a file").unwrap();
    let k1 = line(xbase(home.path(), &["put", "--file", file.to_str().unwrap()]));
    let k2 = line(xbase_with_input(home.path(), &["put"], b"from a file"));
    assert_eq!(k1, k2, "content-hash root store");
    let out_file = home.path().join("out.bin");
    assert_eq!(
        ok(xbase(home.path(), &["get", &k1, "--out", out_file.to_str().unwrap()])),
        ""
    );
    assert_eq!(fs::read(out_file).unwrap(), b"from a file");

    let both = xbase(home.path(), &["put", "--hex", "00", "--file", file.to_str().unwrap()]);
    assert_eq!(both.status.code(), Some(1));
}

#[test]
fn bad_key_is_a_user_error() {
    let home = tempfile::tempdir().unwrap();
    let out = xbase(home.path(), &["get", "not-hex"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());

    let out = xbase(home.path(), &["get", "abcd"]);
    assert_eq!(out.status.code(), Some(1), "unknown key");
    assert!(out.stdout.is_empty());
}

#[test]
fn corruption_is_exit_2() {
    let home = tempfile::tempdir().unwrap();
    let store = home.path().join("c.log");
    let s = store.to_str().unwrap();
    ok(xbase(home.path(), &["--store", s, "put", "--hex", "0102030405"]));
    ok(xbase(home.path(), &["--store", s, "put", "--hex", "060708"]));
    let mut bytes = fs::read(&store).unwrap();
    // last byte of the first value
    bytes[22 + 4 + 32 + 4 + 4] ^= 0xFF;
    fs::write(&store, bytes).unwrap();
    let out = xbase(home.path(), &["--store", s, "store-id"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn update_protocol_matches_library() {
    let home = tempfile::tempdir().unwrap();
    let h = home.path();
    let k1 = line(xbase(h, &["put", "--hex", "d1"]));
    let k2 = line(xbase(h, &["put", "--hex", "d2"]));
    ok(xbase(h, &["bind", "n", &k1]));
    ok(xbase(h, &["unbind", "n", &k1]));
    ok(xbase(h, &["bind", "n", &k2]));
    assert_eq!(ok(xbase(h, &["lookup", "n"])), format!("{k2}\n"));
    assert_eq!(ok(xbase(h, &["lookup-as-of", "n", "1"])), format!("{k1}\n"));
    assert_eq!(ok(xbase(h, &["lookup-as-of", "n", "2"])), "");
    assert_eq!(xbase(h, &["lookup-as-of", "n", "9"]).status.code(), Some(1));
    assert_eq!(xbase(h, &["unbind", "n", &k1]).status.code(), Some(1));
    assert_eq!(xbase(h, &["get", &k1]).stdout, [0xd1]);

    // the library sees exactly what the CLI did
    let namer = PersistentNamer::open(h.join("root.namer")).unwrap();
    let keys: Vec<String> = namer.lookup(&Name::new("n").unwrap()).iter().map(Key::to_hex).collect();
    assert_eq!(keys, [k2]);
    assert_eq!(namer.max_seq(), 3);
}

#[test]
fn lookup_is_sorted() {
    let home = tempfile::tempdir().unwrap();
    let h = home.path();
    for k in ["ff", "0a", "b0", "0a01"] {
        ok(xbase(h, &["bind", "many", k]));
    }
    assert_eq!(ok(xbase(h, &["lookup", "many"])), "0a\n0a01\nb0\nff\n");
    assert_eq!(ok(xbase(h, &["lookup", "nobody"])), "");
}

#[test]
fn root_store_persists_across_processes() {
    let home = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_xbase"))
            .env("XBASE_HOME", home.path())
            .args(args)
            .output()
            .unwrap()
    };
    let k = line(run(&["put", "--hex", "cafe"]));
    assert_eq!(run(&["get", &k]).stdout, [0xca, 0xfe]);
    let id1 = line(run(&["store-id"]));
    let id2 = line(run(&["store-id"]));
    assert_eq!(id1, id2);
    assert!(home.path().join("root.store").is_file());
}

#[test]
fn serve_and_use_remotely() {
    let home = tempfile::tempdir().unwrap();
    let h = home.path();
    let store = h.join("served.log");
    let s = store.to_str().unwrap();
    // a 1-byte key leaves the sequence counter alone
    ok(xbase(
        h,
        &["--store", s, "--policy", "sequence", "put-with-key", "ff", "--hex", ""],
    ));
    let id = line(xbase(h, &["--store", s, "store-id"]));
    let (_server, addr) = serve(h, s);
    assert_eq!(line(xbase(h, &["--store", &addr, "store-id"])), id);
    let k = line(xbase(h, &["--store", &addr, "put", "--hex", "abcdef"]));
    assert_eq!(k, "0000000000000001");
    assert_eq!(xbase(h, &["--store", &addr, "get", &k]).stdout, [0xab, 0xcd, 0xef]);
    assert_eq!(
        xbase(h, &["--store", &addr, "get", "0000000000000009"]).status.code(),
        Some(1)
    );
}

#[test]
fn unreachable_remote_is_exit_2() {
    let home = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let out = xbase(home.path(), &["--store", &format!("127.0.0.1:{port}"), "store-id"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn proxy_targets() {
    let home = tempfile::tempdir().unwrap();
    let h = home.path();
    let remote_home = tempfile::tempdir().unwrap();
    let (_server, addr) = serve(remote_home.path(), "root");
    let k = line(xbase(remote_home.path(), &["--store", &addr, "put", "--hex", "5eed"]));

    assert_eq!(xbase(h, &["--store", "proxy", "get", &k]).status.code(), Some(1));
    ok(xbase(h, &["proxy", "add-target", &addr]));
    ok(xbase(h, &["proxy", "add-target", "127.0.0.1:1"]));
    assert_eq!(xbase(h, &["proxy", "add-target", &addr]).status.code(), Some(1));
    assert_eq!(ok(xbase(h, &["proxy", "list"])), format!("{addr}\n127.0.0.1:1\n"));
    assert_eq!(xbase(h, &["--store", "proxy", "get", &k]).stdout, [0x5e, 0xed]);

    // puts land in the local root store
    let local = line(xbase(h, &["--store", "proxy", "put", "--hex", "01"]));
    assert_eq!(xbase(h, &["get", &local]).stdout, [0x01]);

    ok(xbase(h, &["proxy", "remove-target", &addr]));
    assert_eq!(xbase(h, &["proxy", "remove-target", &addr]).status.code(), Some(1));
    assert_eq!(ok(xbase(h, &["proxy", "list"])), "127.0.0.1:1\n");
}

const DOC: &str =
    r#"<library><book id="1"><title>A &amp; B</title></book><book id="2"><title>C</title></book></library>"#;

#[test]
fn frag_and_defrag() {
    let home = tempfile::tempdir().unwrap();
    let h = home.path();
    let doc = h.join("lib.xml");
    let schema = h.join("schema.xml");
    fs::write(&doc, DOC).unwrap();
    fs::write(&schema, r#"<library><book frag:collapse="true"/></library>"#).unwrap();
    let (d, s) = (doc.to_str().unwrap(), schema.to_str().unwrap());

    let root = line(xbase(h, &["frag", d, "--schema", s, "--mode", "key"]));
    assert_eq!(root.len(), 64);
    assert_eq!(ok(xbase(h, &["defrag", &root])), DOC);

    let root = line(xbase(h, &["frag", d, "--schema", s, "--mode", "name"]));
    assert_eq!(root, "lib/library.1");
    assert_eq!(ok(xbase(h, &["defrag", &root])), DOC);
    let book2 = line(xbase(h, &["lookup", "lib/library.1/book.2"]));
    assert_eq!(
        ok(xbase(h, &["get", &book2])),
        r#"<book id="2"><title>C</title></book>"#
    );

    let root = line(xbase(
        h,
        &["frag", d, "--schema", s, "--mode", "self", "--prefix", "mine"],
    ));
    assert_eq!(ok(xbase(h, &["defrag", &root])), DOC);
    assert_eq!(ok(xbase(h, &["defrag", "--name", "mine/library.1"])), DOC);

    fs::write(&doc, "<library>").unwrap();
    assert_eq!(
        xbase(h, &["frag", d, "--schema", s, "--mode", "key"]).status.code(),
        Some(1)
    );
}

#[test]
fn export_import_round_trip() {
    let home = tempfile::tempdir().unwrap();
    let h = home.path();
    let src = h.join("src");
    let s = src.to_str().unwrap();
    for v in ["", "00", "ff00ff"] {
        ok(xbase(
            h,
            &[
                "--store",
                s,
                "--layout",
                "file-per-key",
                "--policy",
                "sequence",
                "put",
                "--hex",
                v,
            ],
        ));
    }
    let image = ok(xbase(h, &["export-store", s]));
    let image_path = h.join("image.xml");
    fs::write(&image_path, &image).unwrap();

    let copy = h.join("copy.log");
    ok(xbase(
        h,
        &["import-store", image_path.to_str().unwrap(), copy.to_str().unwrap()],
    ));
    assert_eq!(ok(xbase(h, &["export-store", copy.to_str().unwrap()])), image);
    assert_eq!(
        xbase(
            h,
            &["import-store", image_path.to_str().unwrap(), copy.to_str().unwrap()]
        )
        .status
        .code(),
        Some(1)
    );
    // continues the counter
    assert_eq!(
        line(xbase(h, &["--store", copy.to_str().unwrap(), "put", "--hex", "01"])),
        "0000000000000004"
    );

    // identical to the library's own image of the same store
    let lib = LocalStore::open_existing(&src).unwrap();
    assert_eq!(StoreCaster.reify_snapshot(&lib.snapshot().unwrap()), image.as_bytes());

    fs::write(&image_path, "<store/>").unwrap();
    let out = xbase(
        h,
        &[
            "import-store",
            image_path.to_str().unwrap(),
            h.join("x").to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        xbase(h, &["export-store", h.join("missing").to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn policy_mismatch_is_reported() {
    let home = tempfile::tempdir().unwrap();
    let h = home.path();
    let p = h.join("p.log");
    let s = p.to_str().unwrap();
    ok(xbase(h, &["--store", s, "--policy", "sequence", "put", "--hex", "01"]));
    let out = xbase(h, &["--store", s, "--policy", "content-hash", "put", "--hex", "01"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        xbase(h, &["--policy", "sequence", "put", "--hex", "01"]).status.code(),
        Some(1)
    );
}
