use crate::commands::{Context, Failure};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

/// Pretty JSON with a trailing newline; field order follows the struct.
pub fn write_json<T: Serialize>(ctx: &Context, name: &str, value: &T) -> Result<(), Failure> {
    let path = ctx.out.join(name);
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(&path, e))?;
    s.push('\n');
    std::fs::write(&path, s).map_err(|e| io_err(&path, e))
}

/// Opens `name` in the output directory and hands a buffered writer to `f`.
pub fn write_with<F>(ctx: &Context, name: &str, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> transverse_core::Result<()>,
{
    let path = ctx.out.join(name);
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| io_err(&path, e))
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    exit_code: u8,
    tol_scale: f64,
    threads: usize,
    unix_time: u64,
}

/// Run metadata, the only output that carries a timestamp.
pub fn write_meta(ctx: &Context, command: &str, exit_code: u8) -> Result<(), Failure> {
    let meta = Meta {
        command,
        version: env!("CARGO_PKG_VERSION"),
        exit_code,
        tol_scale: ctx.tol_scale,
        threads: rayon::current_num_threads(),
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    write_json(ctx, "meta.json", &meta)
}
