//! Synthetic league generator with known latent structure.
//!
//! Salaries are composed from visible stats plus hidden agent, team and
//! social-capital terms, so downstream tests can check *why* a graph-fused
//! model corrects or misleads a baseline rather than only how often.
//!
//! Pricing rules:
//! - drafted players in their first [`ROOKIE_CONTRACT_YEARS`] seasons are paid
//!   [`rookie_scale_salary`] of (overall pick, age), nothing else;
//! - veterans are priced by [`veteran_log_salary`] on a stats index plus the
//!   latent terms and noise;
//! - a breakout season is priced on the previous season's stats;
//! - declining-legacy veterans are priced on their career-peak stats and get
//!   a boosted social capital.

mod csvio;
mod validate;

pub use csvio::{load_csv, write_csv, LoadReport};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    AwardEvent, Controls, Dataset, FeatureSchema, InjuryEvent, Meta, PlayerSeasonRecord, Season,
};
use crate::error::{Error, Result};

/// Stat columns produced by the generator, in schema order.
pub const STAT_NAMES: [&str; 6] = [
    "games_played",
    "minutes",
    "points",
    "rebounds",
    "assists",
    "ts_pct_calc",
];

pub const ROOKIE_CONTRACT_YEARS: i32 = 3;

const INJURY_TYPES: [&str; 5] = ["ankle", "knee", "hamstring", "back", "shoulder"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeagueConfig {
    /// Active roster size per season.
    pub n_players: usize,
    pub n_teams: usize,
    pub n_agents: usize,
    pub first_season: Season,
    pub last_season: Season,
    /// Fraction of the roster replaced by draftees each season.
    pub rookie_rate: f64,
    pub agent_quality_effect: f64,
    pub team_premium_effect: f64,
    pub veteran_capital_effect: f64,
    pub noise_sd: f64,
    pub breakout_rate: f64,
    pub decline_rate: f64,
    /// Seasons simulated before `first_season` and not recorded, so the
    /// recorded roster has a settled draft and contract history.
    pub burn_in_seasons: u32,
    pub seed: u64,
}

impl Default for LeagueConfig {
    /// About 1,200 player-seasons over 2019-2024.
    fn default() -> Self {
        Self {
            n_players: 200,
            n_teams: 30,
            n_agents: 24,
            first_season: 2019,
            last_season: 2024,
            rookie_rate: 0.12,
            agent_quality_effect: 0.45,
            team_premium_effect: 0.15,
            veteran_capital_effect: 0.35,
            noise_sd: 0.12,
            breakout_rate: 0.06,
            decline_rate: 0.2,
            burn_in_seasons: 8,
            seed: 7,
        }
    }
}

impl LeagueConfig {
    /// Salary depends only on visible stats and controls.
    pub fn degenerate(seed: u64) -> Self {
        Self {
            agent_quality_effect: 0.0,
            team_premium_effect: 0.0,
            veteran_capital_effect: 0.0,
            noise_sd: 0.0,
            breakout_rate: 0.0,
            decline_rate: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn rookies_per_season(&self) -> usize {
        (self.rookie_rate * self.n_players as f64).round() as usize
    }

    pub fn check(&self) -> Result<()> {
        if self.n_players == 0 || self.n_teams == 0 || self.n_agents == 0 {
            return Err(Error::Config("player, team and agent counts must be >= 1".into()));
        }
        if self.last_season < self.first_season {
            return Err(Error::Config("last_season precedes first_season".into()));
        }
        for (name, p) in [
            ("rookie_rate", self.rookie_rate),
            ("breakout_rate", self.breakout_rate),
            ("decline_rate", self.decline_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::Config("noise_sd must be >= 0".into()));
        }
        if self.rookies_per_season() >= self.n_players {
            return Err(Error::Config(format!(
                "{} rookies per season cannot fit a roster of {}",
                self.rookies_per_season(),
                self.n_players
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    RookieScale,
    Steady,
    Breakout,
    DecliningLegacy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub player_id: String,
    pub season: Season,
    pub class: Trajectory,
}

/// Hidden generator state; written to `latent_truth.json`, never to model inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentTruth {
    pub agent_quality: BTreeMap<String, f64>,
    pub team_premium: BTreeMap<String, f64>,
    pub social_capital: BTreeMap<String, f64>,
    pub trajectories: Vec<TrajectoryEntry>,
}

impl LatentTruth {
    pub fn class_of(&self, player_id: &str, season: Season) -> Option<Trajectory> {
        self.trajectories
            .iter()
            .find(|t| t.player_id == player_id && t.season == season)
            .map(|t| t.class)
    }

    pub fn class_map(&self) -> BTreeMap<(String, Season), Trajectory> {
        self.trajectories
            .iter()
            .map(|t| ((t.player_id.clone(), t.season), t.class))
            .collect()
    }
}

/// Step scale by draft slot (lottery > rest of first round > second round),
/// discounted for older draftees.
pub fn rookie_scale_salary(overall_pick: u32, age: f64) -> f64 {
    let base = match overall_pick {
        1..=14 => 8.0e6,
        15..=30 => 3.5e6,
        _ => 1.6e6,
    };
    base * (-0.04 * (age - 19.0)).exp()
}

/// Index of on-court value computed from visible stats only.
pub fn stats_index(stats: &[Option<f64>]) -> f64 {
    let get = |i: usize| stats.get(i).copied().flatten().unwrap_or(0.0);
    let (games, minutes, points, rebounds, assists) = (get(0), get(1), get(2), get(3), get(4));
    0.55 * points / 26.0 + 0.2 * minutes / 34.0 + 0.15 * (rebounds + assists) / 10.0 + 0.1 * games / 82.0
}

/// Log salary of a veteran before agent, team, capital and noise terms.
pub fn veteran_log_salary(index: f64, years_since_draft: i32) -> f64 {
    14.0 + 2.6 * index + 0.04 * years_since_draft.clamp(0, 12) as f64
}

struct PlayerState {
    id: String,
    age: f64,
    draft_year: i32,
    pick: Option<u32>,
    skill: f64,
    prev_skill: f64,
    peak_stats: Vec<Option<f64>>,
    peak_index: f64,
    prev_stats: Option<Vec<Option<f64>>>,
    rebound_role: f64,
    capital: f64,
    legacy: bool,
    team: usize,
    agent: usize,
    seasons_played: u32,
}

/// Deterministic in `config` (seed included).
pub fn generate_league(config: &LeagueConfig) -> Result<(Dataset, LatentTruth)> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let team_ids: Vec<String> = (0..config.n_teams).map(|i| format!("T{:02}", i + 1)).collect();
    let agent_ids: Vec<String> = (0..config.n_agents).map(|i| format!("A{:02}", i + 1)).collect();
    let team_premium: Vec<f64> = (0..config.n_teams).map(|_| std_normal.sample(&mut rng)).collect();
    let agent_quality: Vec<f64> = (0..config.n_agents).map(|_| std_normal.sample(&mut rng)).collect();

    let mut next_player = 0usize;
    let mut new_player = |rng: &mut ChaCha8Rng, season: Season, rookie: bool| -> PlayerState {
        next_player += 1;
        let id = format!("P{next_player:04}");
        let (age, ysd) = if rookie {
            (19.0 + rng.gen_range(0..4) as f64, 0)
        } else {
            let ysd = rng.gen_range(0..14);
            (19.0 + rng.gen_range(0..4) as f64 + ysd as f64, ysd)
        };
        let peak = 0.35 + 0.25 * std_normal.sample(rng);
        let capital = std_normal.sample(rng);
        PlayerState {
            id,
            age,
            draft_year: season - ysd,
            pick: None,
            skill: peak,
            prev_skill: peak,
            peak_stats: Vec::new(),
            peak_index: f64::NEG_INFINITY,
            prev_stats: None,
            rebound_role: rng.gen_range(0.2..0.8),
            capital,
            legacy: false,
            team: rng.gen_range(0..config.n_teams),
            agent: 0,
            seasons_played: 0,
        }
    };
    let choose_agent = |rng: &mut ChaCha8Rng, capital: f64| -> usize {
        let weights: Vec<f64> = agent_quality.iter().map(|q| (1.5 * capital * q).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        weights.len() - 1
    };

    let start = config.first_season - config.burn_in_seasons as Season;
    let mut roster: Vec<PlayerState> = Vec::with_capacity(config.n_players);
    for _ in 0..config.n_players {
        let mut p = new_player(&mut rng, start, false);
        p.pick = if rng.gen_bool(0.9) { Some(rng.gen_range(1..=60)) } else { None };
        p.agent = choose_agent(&mut rng, p.capital);
        roster.push(p);
    }

    let mut records = Vec::new();
    let mut awards = Vec::new();
    let mut injuries = Vec::new();
    let mut trajectories = Vec::new();
    let mut social_capital = BTreeMap::new();
    let noise = Normal::new(0.0, config.noise_sd.max(0.0)).expect("finite sd");

    for season in start..=config.last_season {
        let recorded = season >= config.first_season;
        if season > start {
            // age, develop, retire, draft
            for p in roster.iter_mut() {
                p.age += 1.0;
                p.prev_skill = p.skill;
                let drift = if p.age < 27.0 {
                    0.04
                } else if p.age < 31.0 {
                    0.0
                } else {
                    -0.05
                };
                p.skill += drift + 0.04 * std_normal.sample(&mut rng);
                if !p.legacy && p.age >= 30.0 && season - p.draft_year >= 7 && rng.gen_bool(config.decline_rate) {
                    p.legacy = true;
                    p.capital = p.capital.abs() + 1.0;
                    p.agent = choose_agent(&mut rng, p.capital);
                }
                if p.legacy {
                    p.skill -= 0.06;
                }
                if rng.gen_bool(0.2) {
                    p.team = rng.gen_range(0..config.n_teams);
                }
            }
            let n_rookies = config.rookies_per_season();
            let mut order: Vec<(f64, usize)> = roster
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let protected = if p.legacy { 1.0 } else { 0.0 };
                    (p.age / 10.0 - 2.0 * p.skill - protected + 0.3 * std_normal.sample(&mut rng), i)
                })
                .collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut retire: Vec<usize> = order.iter().take(n_rookies).map(|&(_, i)| i).collect();
            retire.sort_unstable_by(|a, b| b.cmp(a));
            for i in retire {
                roster.remove(i);
            }
            let mut draftees: Vec<PlayerState> =
                (0..n_rookies).map(|_| new_player(&mut rng, season, true)).collect();
            let mut scored: Vec<(f64, usize)> = draftees
                .iter()
                .enumerate()
                .map(|(i, d)| (d.skill + 0.1 * std_normal.sample(&mut rng), i))
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (slot, &(_, i)) in scored.iter().enumerate() {
                let pick = slot as u32 + 1;
                draftees[i].pick = (pick <= 60).then_some(pick);
            }
            for mut d in draftees {
                d.agent = choose_agent(&mut rng, d.capital);
                roster.push(d);
            }
        }

        let mut season_skills: Vec<(f64, usize)> = Vec::with_capacity(roster.len());
        for (idx, p) in roster.iter_mut().enumerate() {
            if rng.gen_bool(0.05) {
                p.agent = choose_agent(&mut rng, p.capital);
            }
            let breakout = p.age < 28.0
                && p.seasons_played >= 2
                && !p.legacy
                && rng.gen_bool(config.breakout_rate);
            if breakout {
                p.skill += 0.35;
            }
            let injured = rng.gen_bool(0.15);
            let games_missed = if injured { rng.gen_range(1..=40) } else { 0 };
            if injured && recorded {
                let kind = INJURY_TYPES[rng.gen_range(0..INJURY_TYPES.len())];
                injuries.push(InjuryEvent {
                    player_id: p.id.clone(),
                    season_of_injury: season,
                    injury_type: kind.to_string(),
                    games_missed,
                });
            }
            let s = p.skill.max(0.0);
            let round1 = |x: f64| (x * 10.0).round() / 10.0;
            let games = (74.0 - games_missed as f64 + 4.0 * std_normal.sample(&mut rng)).clamp(0.0, 82.0).round();
            let minutes = round1((8.0 + 26.0 * s + 2.0 * std_normal.sample(&mut rng)).clamp(2.0, 40.0));
            let points = round1((2.0 + 24.0 * s + 1.5 * std_normal.sample(&mut rng)).max(0.0));
            let rebounds = round1((1.5 + 8.0 * s * p.rebound_role + 0.8 * std_normal.sample(&mut rng)).max(0.0));
            let assists =
                round1((0.5 + 7.0 * s * (1.0 - p.rebound_role) + 0.6 * std_normal.sample(&mut rng)).max(0.0));
            let ts = ((0.50 + 0.08 * s + 0.02 * std_normal.sample(&mut rng)) * 1000.0).round() / 1000.0;
            let stats = vec![
                Some(games),
                Some(minutes),
                Some(points),
                Some(rebounds),
                Some(assists),
                (games >= 5.0).then_some(ts),
            ];
            let ysd = season - p.draft_year;
            let round_pick = p.pick.map(|k| if k <= 30 { 1 } else { 2 });
            let controls = Controls {
                age_now: Some(p.age),
                draft_year: Some(p.draft_year),
                overall_pick: p.pick,
                round_pick,
                years_since_draft: Some(ysd),
            };

            let index = stats_index(&stats);
            let (class, salary) = match p.pick {
                Some(pick) if ysd < ROOKIE_CONTRACT_YEARS => {
                    (Trajectory::RookieScale, rookie_scale_salary(pick, p.age))
                }
                _ => {
                    let (class, priced_index) = if p.legacy {
                        (Trajectory::DecliningLegacy, p.peak_index.max(index))
                    } else if breakout {
                        let prev = p.prev_stats.as_deref().map(stats_index).unwrap_or(index);
                        (Trajectory::Breakout, prev)
                    } else {
                        (Trajectory::Steady, index)
                    };
                    let tenure = (p.seasons_played as f64 / 10.0).min(1.0);
                    let log_salary = veteran_log_salary(priced_index, ysd)
                        + config.agent_quality_effect * agent_quality[p.agent]
                        + config.team_premium_effect * team_premium[p.team]
                        + config.veteran_capital_effect * p.capital * tenure
                        + if config.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    (class, log_salary.exp())
                }
            };
            if index > p.peak_index {
                p.peak_index = index;
                p.peak_stats = stats.clone();
            }
            p.prev_stats = Some(stats.clone());
            p.seasons_played += 1;
            season_skills.push((s, idx));
            if recorded {
                social_capital.insert(p.id.clone(), p.capital);
                trajectories.push(TrajectoryEntry {
                    player_id: p.id.clone(),
                    season,
                    class,
                });
                records.push(PlayerSeasonRecord {
                    player_id: p.id.clone(),
                    season,
                    stats,
                    controls,
                    meta: Meta {
                        team_id: Some(team_ids[p.team].clone()),
                        agent_id: Some(agent_ids[p.agent].clone()),
                    },
                    salary_usd: salary,
                    is_synthetic: true,
                });
            }
        }

        if !recorded {
            continue;
        }
        season_skills.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (rank, &(_, idx)) in season_skills.iter().enumerate().take(15) {
            let name = match rank {
                0 => "mvp",
                1..=4 => "all_nba",
                _ => "all_star",
            };
            awards.push(AwardEvent {
                player_id: roster[idx].id.clone(),
                season_awarded: season,
                award_name: name.to_string(),
            });
        }
    }

    records.sort_by(|a, b| a.player_id.cmp(&b.player_id).then(a.season.cmp(&b.season)));
    let mut dataset = Dataset::new(FeatureSchema::with_stats(&STAT_NAMES), records);
    dataset.awards = awards;
    dataset.injuries = injuries;
    dataset.teams = Some(team_ids.clone());
    dataset.agents = Some(agent_ids.clone());

    let truth = LatentTruth {
        agent_quality: agent_ids.into_iter().zip(agent_quality).collect(),
        team_premium: team_ids.into_iter().zip(team_premium).collect(),
        social_capital,
        trajectories,
    };
    Ok((dataset, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_league_has_expected_size() {
        let (d, truth) = generate_league(&LeagueConfig::default()).unwrap();
        assert_eq!(d.len(), 1200);
        assert_eq!(d.seasons().len(), 6);
        assert_eq!(truth.trajectories.len(), d.len());
        assert_eq!(d.keys().len(), d.len());
        for r in &d.records {
            assert!(r.salary_usd >= 0.0);
            assert_eq!(r.stats.len(), STAT_NAMES.len());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_league(&LeagueConfig::default()).unwrap();
        let b = generate_league(&LeagueConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_league(&LeagueConfig { seed: 8, ..LeagueConfig::default() }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let cfg = LeagueConfig { rookie_rate: 1.0, ..LeagueConfig::default() };
        assert!(matches!(cfg.check(), Err(Error::Config(_))));
        let cfg = LeagueConfig { n_teams: 0, ..LeagueConfig::default() };
        assert!(cfg.check().is_err());
        let cfg = LeagueConfig { noise_sd: -1.0, ..LeagueConfig::default() };
        assert!(cfg.check().is_err());
    }

    #[test]
    fn rookie_salaries_follow_the_scale() {
        let (d, truth) = generate_league(&LeagueConfig::default()).unwrap();
        let classes = truth.class_map();
        let mut n = 0;
        for r in &d.records {
            if classes[&(r.player_id.clone(), r.season)] == Trajectory::RookieScale {
                let c = &r.controls;
                let expected = rookie_scale_salary(c.overall_pick.unwrap(), c.age_now.unwrap());
                assert!((r.salary_usd - expected).abs() < 1e-6);
                n += 1;
            }
        }
        assert!(n > 100, "only {n} rookie-scale records");
    }

    #[test]
    fn degenerate_salary_is_a_function_of_visible_features() {
        let (d, _) = generate_league(&LeagueConfig::degenerate(3)).unwrap();
        for r in &d.records {
            let c = &r.controls;
            let ysd = c.years_since_draft.unwrap();
            let expected = match c.overall_pick {
                Some(pick) if ysd < ROOKIE_CONTRACT_YEARS => {
                    rookie_scale_salary(pick, c.age_now.unwrap()).ln()
                }
                _ => veteran_log_salary(stats_index(&r.stats), ysd),
            };
            assert!((r.salary_usd.ln() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn agent_gap_is_exactly_the_quality_gap() {
        let cfg = LeagueConfig {
            agent_quality_effect: 2.0,
            team_premium_effect: 0.0,
            veteran_capital_effect: 0.0,
            noise_sd: 0.0,
            breakout_rate: 0.0,
            decline_rate: 0.0,
            ..LeagueConfig::default()
        };
        let (d, truth) = generate_league(&cfg).unwrap();
        let classes = truth.class_map();
        let mut checked = 0;
        for r in &d.records {
            if classes[&(r.player_id.clone(), r.season)] != Trajectory::Steady {
                continue;
            }
            let base = veteran_log_salary(stats_index(&r.stats), r.controls.years_since_draft.unwrap());
            let q = truth.agent_quality[r.meta.agent_id.as_ref().unwrap()];
            let y = r.salary_usd.ln();
            assert!((y - base - 2.0 * q).abs() < 1e-9);
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn planted_trajectories_are_present() {
        let (_, truth) = generate_league(&LeagueConfig::default()).unwrap();
        let count = |c| truth.trajectories.iter().filter(|t| t.class == c && t.season == 2024).count();
        assert!(count(Trajectory::DecliningLegacy) >= 10);
        assert!(count(Trajectory::RookieScale) >= 50);
        assert!(truth.trajectories.iter().any(|t| t.class == Trajectory::Breakout));
    }
}
