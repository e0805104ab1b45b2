#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY_CENSUS: &str = "\
casilla_id,stratum_id,lista_nominal,X,Y
a1,A,150,10,0
a2,A,150,8,2
a3,A,150,6,4
a4,A,150,4,6
b1,B,130,5,5
b2,B,130,3,7
b3,B,140,1,9
";

pub const TINY_SCHEMA: &str = "\
[[contender]]
id = \"X\"
label = \"Candidate X\"

[[contender]]
id = \"Y\"
label = \"Candidate Y\"
";

pub fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

pub fn qcaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcaudit")).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

/// Synthetic census (+ received sample) written by the binary itself.
pub fn synth(dir: &Path, args: &[&str]) {
    let mut all = vec!["synth", "--out-dir", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    let o = qcaudit(&all);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
