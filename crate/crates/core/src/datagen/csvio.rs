//! Directory-of-CSVs layout:
//!
//! | file | columns |
//! |---|---|
//! | `player_seasons.csv` | player_id, season, one column per stat, age_now, draft_year, overall_pick, round_pick, years_since_draft |
//! | `salaries.csv` | player_id, season, salary_usd |
//! | `affiliations.csv` | player_id, season, team_id, agent_id |
//! | `awards.csv` | player_id, season_awarded, award_name |
//! | `injuries.csv` | player_id, season_of_injury, injury_type, games_missed |
//! | `teams.csv`, `agents.csv` | optional registries (team_id / agent_id) |
//!
//! Missing numeric values are empty cells. `latent_truth.json` is written
//! for synthetic leagues and only its presence is checked on load.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use crate::data::{
    Controls, Dataset, FeatureSchema, InjuryEvent, AwardEvent, Meta, PlayerSeasonRecord, Season,
    CONTROL_NAMES,
};
use crate::datagen::LatentTruth;
use crate::error::{Error, Result};

pub const PLAYER_SEASONS: &str = "player_seasons.csv";
pub const SALARIES: &str = "salaries.csv";
pub const AFFILIATIONS: &str = "affiliations.csv";
pub const AWARDS: &str = "awards.csv";
pub const INJURIES: &str = "injuries.csv";
pub const TEAMS: &str = "teams.csv";
pub const AGENTS: &str = "agents.csv";
pub const LATENT_TRUTH: &str = "latent_truth.json";

/// Row counts per file read by [`load_csv`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: BTreeMap<String, usize>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
}

/// Writes `dataset` (and `truth`, if given) into `dir`, creating it.
pub fn write_csv(dataset: &Dataset, truth: Option<&LatentTruth>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stat_names = dataset.schema.stat_names();

    let mut w = writer(dir, PLAYER_SEASONS)?;
    let mut header = vec!["player_id".to_string(), "season".to_string()];
    header.extend(stat_names.iter().map(|s| s.to_string()));
    header.extend(CONTROL_NAMES.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in &dataset.records {
        let mut row = vec![r.player_id.clone(), r.season.to_string()];
        row.extend(r.stats.iter().map(opt));
        let c = &r.controls;
        row.extend([
            opt(&c.age_now),
            opt(&c.draft_year),
            opt(&c.overall_pick),
            opt(&c.round_pick),
            opt(&c.years_since_draft),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = writer(dir, SALARIES)?;
    w.write_record(["player_id", "season", "salary_usd"])?;
    for r in &dataset.records {
        w.write_record([r.player_id.clone(), r.season.to_string(), r.salary_usd.to_string()])?;
    }
    w.flush()?;

    let mut w = writer(dir, AFFILIATIONS)?;
    w.write_record(["player_id", "season", "team_id", "agent_id"])?;
    for r in &dataset.records {
        w.write_record([
            r.player_id.clone(),
            r.season.to_string(),
            opt(&r.meta.team_id),
            opt(&r.meta.agent_id),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, AWARDS)?;
    w.write_record(["player_id", "season_awarded", "award_name"])?;
    for a in &dataset.awards {
        w.write_record([a.player_id.clone(), a.season_awarded.to_string(), a.award_name.clone()])?;
    }
    w.flush()?;

    let mut w = writer(dir, INJURIES)?;
    w.write_record(["player_id", "season_of_injury", "injury_type", "games_missed"])?;
    for i in &dataset.injuries {
        w.write_record([
            i.player_id.clone(),
            i.season_of_injury.to_string(),
            i.injury_type.clone(),
            i.games_missed.to_string(),
        ])?;
    }
    w.flush()?;

    for (name, column, registry) in [
        (TEAMS, "team_id", &dataset.teams),
        (AGENTS, "agent_id", &dataset.agents),
    ] {
        if let Some(ids) = registry {
            let mut w = writer(dir, name)?;
            w.write_record([column])?;
            for id in ids {
                w.write_record([id])?;
            }
            w.flush()?;
        }
    }

    if let Some(truth) = truth {
        let f = BufWriter::new(File::create(dir.join(LATENT_TRUTH))?);
        serde_json::to_writer_pretty(f, truth)?;
    }
    Ok(())
}

struct Table {
    file: String,
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(dir: &Path, name: &str, required: bool) -> Result<Option<Table>> {
        let path = dir.join(name);
        if !path.exists() {
            return if required { Err(Error::MissingFile(path)) } else { Ok(None) };
        }
        let mut rdr = csv::Reader::from_path(&path)?;
        let header = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Load {
                file: name.to_string(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec));
        }
        Ok(Some(Table {
            file: name.to_string(),
            header,
            rows,
        }))
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::Load {
            file: self.file.clone(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    }

    fn err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Load {
            file: self.file.clone(),
            line,
            message: message.into(),
        }
    }

    fn parse<T: FromStr>(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<T> {
        let raw = rec.get(col).unwrap_or("").trim();
        raw.parse()
            .map_err(|_| self.err(line, format!("cannot parse `{raw}` in column `{}`", self.header[col])))
    }

    fn parse_opt<T: FromStr>(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<Option<T>> {
        let raw = rec.get(col).unwrap_or("").trim();
        if raw.is_empty() {
            return Ok(None);
        }
        self.parse(line, rec, col).map(Some)
    }

    fn text(rec: &csv::StringRecord, col: usize) -> String {
        rec.get(col).unwrap_or("").trim().to_string()
    }
}

type Key = (String, Season);

fn keyed<T>(
    table: &Table,
    mut value: impl FnMut(u64, &csv::StringRecord) -> Result<T>,
) -> Result<HashMap<Key, T>> {
    let (pc, sc) = (table.col("player_id")?, table.col("season")?);
    let mut out = HashMap::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let key = (Table::text(rec, pc), table.parse::<Season>(*line, rec, sc)?);
        let v = value(*line, rec)?;
        if out.insert(key.clone(), v).is_some() {
            return Err(table.err(*line, format!("duplicate (player_id, season) = ({}, {})", key.0, key.1)));
        }
    }
    Ok(out)
}

/// Loads a dataset directory. Stat columns are every `player_seasons.csv`
/// column other than the keys and the five controls.
pub fn load_csv(dir: &Path) -> Result<(Dataset, LoadReport)> {
    let ps = Table::read(dir, PLAYER_SEASONS, true)?.expect("required");
    let sal = Table::read(dir, SALARIES, true)?.expect("required");
    let aff = Table::read(dir, AFFILIATIONS, true)?.expect("required");
    let awards_t = Table::read(dir, AWARDS, true)?.expect("required");
    let injuries_t = Table::read(dir, INJURIES, true)?.expect("required");
    let teams_t = Table::read(dir, TEAMS, false)?;
    let agents_t = Table::read(dir, AGENTS, false)?;
    let is_synthetic = dir.join(LATENT_TRUTH).exists();

    let mut report = LoadReport::default();
    for t in [&ps, &sal, &aff, &awards_t, &injuries_t].into_iter().chain(teams_t.iter()).chain(agents_t.iter()) {
        report.rows.insert(t.file.clone(), t.rows.len());
    }

    let control_cols: Vec<usize> = CONTROL_NAMES.iter().map(|c| ps.col(c)).collect::<Result<_>>()?;
    let (pc, sc) = (ps.col("player_id")?, ps.col("season")?);
    let stat_cols: Vec<usize> = (0..ps.header.len())
        .filter(|i| *i != pc && *i != sc && !control_cols.contains(i))
        .collect();
    let stat_names: Vec<&str> = stat_cols.iter().map(|&i| ps.header[i].as_str()).collect();
    let schema = FeatureSchema::with_stats(&stat_names);

    let salary_col = sal.col("salary_usd")?;
    let salaries = keyed(&sal, |line, rec| sal.parse::<f64>(line, rec, salary_col))?;
    let (tc, ac) = (aff.col("team_id")?, aff.col("agent_id")?);
    let affiliations = keyed(&aff, |_, rec| {
        let nonempty = |s: String| (!s.is_empty()).then_some(s);
        Ok(Meta {
            team_id: nonempty(Table::text(rec, tc)),
            agent_id: nonempty(Table::text(rec, ac)),
        })
    })?;

    let mut records = Vec::with_capacity(ps.rows.len());
    let mut seen = HashMap::new();
    for (line, rec) in &ps.rows {
        let player_id = Table::text(rec, pc);
        let season: Season = ps.parse(*line, rec, sc)?;
        let key = (player_id.clone(), season);
        if seen.insert(key.clone(), *line).is_some() {
            return Err(ps.err(*line, format!("duplicate (player_id, season) = ({player_id}, {season})")));
        }
        let stats = stat_cols
            .iter()
            .map(|&c| ps.parse_opt::<f64>(*line, rec, c))
            .collect::<Result<Vec<_>>>()?;
        let controls = Controls {
            age_now: ps.parse_opt(*line, rec, control_cols[0])?,
            draft_year: ps.parse_opt(*line, rec, control_cols[1])?,
            overall_pick: ps.parse_opt(*line, rec, control_cols[2])?,
            round_pick: ps.parse_opt(*line, rec, control_cols[3])?,
            years_since_draft: ps.parse_opt(*line, rec, control_cols[4])?,
        };
        let salary_usd = *salaries.get(&key).ok_or_else(|| Error::Load {
            file: SALARIES.to_string(),
            line: 0,
            message: format!("no salary for ({player_id}, {season})"),
        })?;
        let meta = affiliations.get(&key).cloned().unwrap_or_default();
        records.push(PlayerSeasonRecord {
            player_id,
            season,
            stats,
            controls,
            meta,
            salary_usd,
            is_synthetic,
        });
    }

    for (table, keys) in [(&sal, salaries.keys().collect::<Vec<_>>()), (&aff, affiliations.keys().collect())] {
        if let Some(k) = keys.into_iter().filter(|k| !seen.contains_key(*k)).min() {
            return Err(table.err(0, format!("row for unknown player-season ({}, {})", k.0, k.1)));
        }
    }

    let (apc, asc, anc) = (awards_t.col("player_id")?, awards_t.col("season_awarded")?, awards_t.col("award_name")?);
    let awards = awards_t
        .rows
        .iter()
        .map(|(line, rec)| {
            Ok(AwardEvent {
                player_id: Table::text(rec, apc),
                season_awarded: awards_t.parse(*line, rec, asc)?,
                award_name: Table::text(rec, anc),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (ipc, isc, itc, igc) = (
        injuries_t.col("player_id")?,
        injuries_t.col("season_of_injury")?,
        injuries_t.col("injury_type")?,
        injuries_t.col("games_missed")?,
    );
    let injuries = injuries_t
        .rows
        .iter()
        .map(|(line, rec)| {
            Ok(InjuryEvent {
                player_id: Table::text(rec, ipc),
                season_of_injury: injuries_t.parse(*line, rec, isc)?,
                injury_type: Table::text(rec, itc),
                games_missed: injuries_t.parse(*line, rec, igc)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let registry = |t: &Option<Table>, column: &str| -> Result<Option<Vec<String>>> {
        match t {
            None => Ok(None),
            Some(t) => {
                let c = t.col(column)?;
                Ok(Some(t.rows.iter().map(|(_, r)| Table::text(r, c)).collect()))
            }
        }
    };

    let mut dataset = Dataset::new(schema, records);
    dataset.awards = awards;
    dataset.injuries = injuries;
    dataset.teams = registry(&teams_t, "team_id")?;
    dataset.agents = registry(&agents_t, "agent_id")?;
    Ok((dataset, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_league, LeagueConfig};

    fn small() -> LeagueConfig {
        LeagueConfig {
            n_players: 40,
            n_teams: 6,
            n_agents: 5,
            ..LeagueConfig::default()
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let (d, truth) = generate_league(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_csv(&d, Some(&truth), dir.path()).unwrap();
        let (back, report) = load_csv(dir.path()).unwrap();
        assert_eq!(back, d);
        assert_eq!(report.rows[PLAYER_SEASONS], d.len());
        assert_eq!(report.rows[AWARDS], d.awards.len());
    }

    #[test]
    fn identical_seeds_write_identical_bytes() {
        let (d, truth) = generate_league(&small()).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_csv(&d, Some(&truth), a.path()).unwrap();
        let (d2, truth2) = generate_league(&small()).unwrap();
        write_csv(&d2, Some(&truth2), b.path()).unwrap();
        for f in [PLAYER_SEASONS, SALARIES, AFFILIATIONS, AWARDS, INJURIES, LATENT_TRUTH] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
    }

    #[test]
    fn duplicate_key_names_the_line() {
        let (d, _) = generate_league(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_csv(&d, None, dir.path()).unwrap();
        let path = dir.path().join(PLAYER_SEASONS);
        let text = std::fs::read_to_string(&path).unwrap();
        let second = text.lines().nth(1).unwrap().to_string();
        std::fs::write(&path, format!("{text}{second}\n")).unwrap();
        match load_csv(dir.path()) {
            Err(Error::Load { file, line, .. }) => {
                assert_eq!(file, PLAYER_SEASONS);
                assert_eq!(line as usize, d.len() + 2);
            }
            other => panic!("expected load error, got {other:?}"),
        }
    }

    #[test]
    fn missing_salary_column_names_the_file() {
        let (d, _) = generate_league(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_csv(&d, None, dir.path()).unwrap();
        std::fs::write(dir.path().join(SALARIES), "player_id,season\nP0001,2019\n").unwrap();
        let err = load_csv(dir.path()).unwrap_err();
        assert!(err.to_string().contains(SALARIES), "{err}");
    }

    #[test]
    fn missing_file_and_bad_number() {
        let (d, _) = generate_league(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_csv(&d, None, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join(INJURIES)).unwrap();
        assert!(matches!(load_csv(dir.path()), Err(Error::MissingFile(_))));

        write_csv(&d, None, dir.path()).unwrap();
        let path = dir.path().join(SALARIES);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = "P0001,2019,lots".into();
        std::fs::write(&path, lines.join("\n")).unwrap();
        match load_csv(dir.path()) {
            Err(Error::Load { file, line, .. }) => assert_eq!((file.as_str(), line), (SALARIES, 4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn latent_truth_is_not_in_model_files() {
        let (d, truth) = generate_league(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_csv(&d, Some(&truth), dir.path()).unwrap();
        for f in [PLAYER_SEASONS, SALARIES, AFFILIATIONS, AWARDS, INJURIES] {
            let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
            let header = text.lines().next().unwrap();
            for hidden in ["quality", "premium", "capital", "trajectory", "class"] {
                assert!(!header.contains(hidden), "{f}: {header}");
            }
        }
    }
}
