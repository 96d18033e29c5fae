//! Append-only JSONL journal with an optional snapshot file.
//!
//! A directory holds `journal.jsonl` and `snapshot.json`. The journal is the
//! source of truth; the snapshot only shortens start-up.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::state::{Entry, State};
use crate::LoopError;

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

enum Sink {
    Memory(Vec<Entry>),
    File { dir: PathBuf, file: File },
}

pub struct Journal {
    sink: Sink,
}

fn parse_lines(path: &Path) -> Result<Vec<Entry>, LoopError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(vec![]),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Entry = serde_json::from_str(&line)
            .map_err(|err| LoopError::Journal(format!("{}:{}: {err}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Drops a torn final line left by a crash mid-append.
fn repair_tail(path: &Path) -> Result<(), LoopError> {
    let Ok(bytes) = fs::read(path) else { return Ok(()) };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
    log::warn!("{}: dropping {} bytes of an incomplete entry", path.display(), bytes.len() - keep);
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(keep as u64)?;
    Ok(())
}

impl Journal {
    pub fn in_memory() -> Self {
        Journal { sink: Sink::Memory(Vec::new()) }
    }

    /// Opens (creating if needed) the journal in `dir` and rebuilds state,
    /// starting from the snapshot when one exists.
    pub fn open(dir: &Path) -> Result<(Journal, State), LoopError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(JOURNAL_FILE);
        repair_tail(&path)?;
        let mut state = match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => {
                serde_json::from_slice(&bytes).map_err(|e| LoopError::Journal(format!("{SNAPSHOT_FILE}: {e}")))?
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => State::default(),
            Err(e) => return Err(e.into()),
        };
        for e in parse_lines(&path)? {
            if e.seq > state.last_seq {
                state.apply(&e)?;
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        file.seek(SeekFrom::End(0))?;
        Ok((Journal { sink: Sink::File { dir: dir.to_path_buf(), file } }, state))
    }

    /// Rebuilds state from the journal alone, ignoring any snapshot.
    pub fn replay(dir: &Path) -> Result<State, LoopError> {
        State::fold(&parse_lines(&dir.join(JOURNAL_FILE))?)
    }

    pub fn append(&mut self, entry: &Entry) -> Result<(), LoopError> {
        match &mut self.sink {
            Sink::Memory(v) => v.push(entry.clone()),
            Sink::File { file, .. } => {
                let mut line = serde_json::to_string(entry).map_err(|e| LoopError::Journal(e.to_string()))?;
                line.push('\n');
                file.write_all(line.as_bytes())?;
                file.flush()?;
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> Result<Vec<Entry>, LoopError> {
        match &self.sink {
            Sink::Memory(v) => Ok(v.clone()),
            Sink::File { dir, .. } => parse_lines(&dir.join(JOURNAL_FILE)),
        }
    }

    /// Writes `state` as the snapshot (atomically) and syncs the journal.
    pub fn snapshot(&mut self, state: &State) -> Result<(), LoopError> {
        let Sink::File { dir, file } = &mut self.sink else { return Ok(()) };
        file.sync_data()?;
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let bytes = serde_json::to_vec(state).map_err(|e| LoopError::Journal(e.to_string()))?;
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }
}
