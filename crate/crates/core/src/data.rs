//! Career records and the career CSV format.
//!
//! A career file is UTF-8 CSV with the header
//! `innings,runs,out,venue,team_innings`. Lines starting with `#` are
//! comments. The `innings` column may be omitted, in which case rows are
//! numbered 1..T in file order. The header itself may be omitted when the
//! rows carry all five columns in the order above.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the match was played, relative to the batter's team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Venue {
    Home,
    Neutral,
    Away,
}

impl Venue {
    /// Exponent applied to the venue multiplier.
    pub fn exponent(self) -> i32 {
        match self {
            Venue::Home => 1,
            Venue::Neutral => 0,
            Venue::Away => -1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Venue::Home => "home",
            Venue::Neutral => "neutral",
            Venue::Away => "away",
        }
    }
}

impl FromStr for Venue {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "home" | "h" | "1" | "+1" => Ok(Venue::Home),
            "neutral" | "n" | "0" => Ok(Venue::Neutral),
            "away" | "a" | "-1" => Ok(Venue::Away),
            other => Err(format!("unknown venue token {other:?}")),
        }
    }
}

impl fmt::Display for Venue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the innings was the team's first or second of the match.
///
/// `Unknown` only arises from missing values in input files; it contributes
/// a zero exponent, the same baseline a neutral venue gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeamInnings {
    First,
    Second,
    Unknown,
}

impl TeamInnings {
    pub fn exponent(self) -> i32 {
        match self {
            TeamInnings::First => 1,
            TeamInnings::Second => -1,
            TeamInnings::Unknown => 0,
        }
    }

    /// CSV token; empty for unknown.
    pub fn token(self) -> &'static str {
        match self {
            TeamInnings::First => "1",
            TeamInnings::Second => "2",
            TeamInnings::Unknown => "",
        }
    }
}

impl FromStr for TeamInnings {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "1" | "first" => Ok(TeamInnings::First),
            "2" | "second" => Ok(TeamInnings::Second),
            other => Err(format!("unknown team_innings token {other:?}")),
        }
    }
}

/// One career innings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InningsRecord {
    /// 1-based career innings number.
    pub index: usize,
    pub runs: u32,
    /// `false` for a not-out (censored) innings.
    pub dismissed: bool,
    pub venue: Venue,
    pub team_innings: TeamInnings,
}

impl InningsRecord {
    pub fn new(index: usize, runs: u32, dismissed: bool, venue: Venue, team_innings: TeamInnings) -> Self {
        Self { index, runs, dismissed, venue, team_innings }
    }
}

/// A player's innings in career order, indexed contiguously from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareerRecord {
    pub player_id: String,
    innings: Vec<InningsRecord>,
}

impl CareerRecord {
    /// Builds a career, checking that indices run 1..=T without gaps.
    pub fn new(player_id: impl Into<String>, innings: Vec<InningsRecord>) -> Result<Self> {
        if innings.is_empty() {
            return Err(Error::NoInnings);
        }
        for (pos, inn) in innings.iter().enumerate() {
            if inn.index != pos + 1 {
                return Err(Error::InvalidParameter(format!(
                    "innings index {} at position {} (expected {})",
                    inn.index,
                    pos + 1,
                    pos + 1
                )));
            }
        }
        Ok(Self { player_id: player_id.into(), innings })
    }

    /// Builds a career from records in order, renumbering them 1..=T.
    pub fn from_ordered(player_id: impl Into<String>, mut innings: Vec<InningsRecord>) -> Result<Self> {
        for (pos, inn) in innings.iter_mut().enumerate() {
            inn.index = pos + 1;
        }
        Self::new(player_id, innings)
    }

    pub fn innings(&self) -> &[InningsRecord] {
        &self.innings
    }

    pub fn len(&self) -> usize {
        self.innings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.innings.is_empty()
    }

    pub fn total_runs(&self) -> u64 {
        self.innings.iter().map(|i| u64::from(i.runs)).sum()
    }

    pub fn dismissals(&self) -> usize {
        self.innings.iter().filter(|i| i.dismissed).count()
    }

    /// The first `n` innings as a career of their own.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(self.player_id.clone(), self.innings[..n.min(self.len())].to_vec())
    }
}

/// Runs per dismissal over the whole career.
pub fn career_average(career: &CareerRecord) -> Result<f64> {
    let outs = career.dismissals();
    if outs == 0 {
        return Err(Error::UndefinedAverage { innings: career.len() });
    }
    Ok(career.total_runs() as f64 / outs as f64)
}

const HEADER: [&str; 5] = ["innings", "runs", "out", "venue", "team_innings"];

/// Reads and validates a career file. The player id is the file stem.
pub fn parse_career_file(path: impl AsRef<Path>) -> Result<CareerRecord> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let player_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "player".to_owned());
    parse_career(file, player_id, path)
}

#[derive(Debug, Clone, Copy)]
struct Columns {
    innings: Option<usize>,
    runs: usize,
    out: usize,
    venue: Option<usize>,
    team_innings: Option<usize>,
}

impl Columns {
    const POSITIONAL: Columns =
        Columns { innings: Some(0), runs: 1, out: 2, venue: Some(3), team_innings: Some(4) };

    fn from_header(fields: &csv::StringRecord) -> Option<Columns> {
        let find = |name: &str| fields.iter().position(|f| f.trim().eq_ignore_ascii_case(name));
        let runs = find("runs")?;
        let out = find("out")?;
        Some(Columns {
            innings: find("innings"),
            runs,
            out,
            venue: find("venue"),
            team_innings: find("team_innings"),
        })
    }
}

/// Parses career CSV from any reader. `source` is used in error messages.
pub fn parse_career<R: Read>(reader: R, player_id: impl Into<String>, source: &Path) -> Result<CareerRecord> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let parse_err = |line: usize, message: String| Error::Parse { path: source.to_path_buf(), line, message };

    let mut columns: Option<Columns> = None;
    let mut innings = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let cols = match columns {
            Some(c) => c,
            None => {
                if let Some(c) = Columns::from_header(&rec) {
                    columns = Some(c);
                    continue;
                }
                if rec.len() != HEADER.len() {
                    return Err(parse_err(line, format!("expected header {:?}", HEADER.join(","))));
                }
                columns = Some(Columns::POSITIONAL);
                Columns::POSITIONAL
            }
        };

        let field = |i: usize| rec.get(i).unwrap_or("");
        let runs: u32 = field(cols.runs)
            .parse()
            .map_err(|_| parse_err(line, format!("runs must be a non-negative integer, got {:?}", field(cols.runs))))?;
        let dismissed = match field(cols.out) {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, format!("out must be 0 or 1, got {other:?}"))),
        };
        let venue = match cols.venue.map(field).unwrap_or("") {
            "" => {
                log::warn!("{}: line {line}: missing venue, treating as neutral", source.display());
                Venue::Neutral
            }
            tok => tok.parse().map_err(|m| parse_err(line, m))?,
        };
        let team_innings = match cols.team_innings.map(field).unwrap_or("") {
            "" => {
                log::warn!("{}: line {line}: missing team_innings, treating as unknown", source.display());
                TeamInnings::Unknown
            }
            tok => tok.parse().map_err(|m| parse_err(line, m))?,
        };
        let expected = innings.len() + 1;
        let index = match cols.innings {
            Some(i) => {
                let idx: usize = field(i)
                    .parse()
                    .map_err(|_| parse_err(line, format!("innings must be a positive integer, got {:?}", field(i))))?;
                if idx != expected {
                    return Err(parse_err(line, format!("non-contiguous innings index at line {line}")));
                }
                idx
            }
            None => expected,
        };
        innings.push(InningsRecord { index, runs, dismissed, venue, team_innings });
    }
    if innings.is_empty() {
        return Err(Error::EmptyCareer(source.to_path_buf()));
    }
    CareerRecord::new(player_id, innings)
}

/// Writes the normalised CSV form of a career (header plus one row per innings).
pub fn write_career<W: Write>(career: &CareerRecord, mut out: W) -> Result<()> {
    writeln!(out, "{}", HEADER.join(","))?;
    for inn in career.innings() {
        writeln!(
            out,
            "{},{},{},{},{}",
            inn.index,
            inn.runs,
            u8::from(inn.dismissed),
            inn.venue,
            inn.team_innings.token()
        )?;
    }
    Ok(())
}

pub fn career_to_csv_string(career: &CareerRecord) -> String {
    let mut buf = Vec::new();
    write_career(career, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}
