//! Budget-constrained evolutionary search: sample a parent from the
//! population, mutate it, score feasible children and evict the lowest score.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::proxies::{self, ProxyKind};
use crate::rng;
use crate::space::{Genome, SpaceConfig};

/// Largest space `brute_force_best` will enumerate.
pub const MAX_BRUTE_FORCE: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Search steps T.
    pub steps: usize,
    /// FLOPs budget B in MACs per sample.
    pub budget: u64,
    /// Population cap E.
    pub population: usize,
    pub seed: u64,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::validation("population cap must be at least 1"));
        }
        if self.budget == 0 {
            return Err(Error::validation("budget must be positive"));
        }
        Ok(())
    }
}

/// Scores and costs genomes of one space.
pub trait Scorer {
    fn space(&self) -> &SpaceConfig;
    fn flops(&mut self, g: &Genome) -> Result<u64>;
    fn score(&mut self, g: &Genome) -> Result<f64>;
}

/// Scores a genome by one proxy on a fixed batch set. Each candidate network
/// is initialised from `child_seed(seed, genome key)`, so a score depends
/// only on the genome; results are cached by genome.
pub struct ProxyScorer {
    space: SpaceConfig,
    proxy: ProxyKind,
    batches: Vec<Batch>,
    input_shape: Vec<usize>,
    classes: usize,
    seed: u64,
    scores: HashMap<Genome, f64>,
    flops: HashMap<Genome, u64>,
}

impl ProxyScorer {
    pub fn new(
        space: SpaceConfig,
        proxy: ProxyKind,
        batches: Vec<Batch>,
        input_shape: Vec<usize>,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        space.validate()?;
        if proxy.needs_data() && batches.is_empty() {
            return Err(Error::validation(format!(
                "proxy {proxy} needs data batches"
            )));
        }
        if matches!(
            proxy,
            ProxyKind::Zico | ProxyKind::ZicoMeanOnly | ProxyKind::ZicoStdOnly
        ) && batches.len() < 2
        {
            return Err(Error::validation(format!(
                "proxy {proxy} needs at least 2 batches"
            )));
        }
        Ok(ProxyScorer {
            space,
            proxy,
            batches,
            input_shape,
            classes,
            seed,
            scores: HashMap::new(),
            flops: HashMap::new(),
        })
    }

    pub fn proxy(&self) -> ProxyKind {
        self.proxy
    }
}

impl Scorer for ProxyScorer {
    fn space(&self) -> &SpaceConfig {
        &self.space
    }

    fn flops(&mut self, g: &Genome) -> Result<u64> {
        if let Some(&f) = self.flops.get(g) {
            return Ok(f);
        }
        let f = self
            .space
            .spec(g, &self.input_shape, self.classes)?
            .count_flops();
        self.flops.insert(g.clone(), f);
        Ok(f)
    }

    fn score(&mut self, g: &Genome) -> Result<f64> {
        if let Some(&s) = self.scores.get(g) {
            return Ok(s);
        }
        let net = self.space.instantiate(
            g,
            &self.input_shape,
            self.classes,
            rng::child_seed(self.seed, &g.key()),
        )?;
        let s = proxies::evaluate(self.proxy, &net, &self.batches)?;
        self.scores.insert(g.clone(), s);
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Init,
    Accepted,
    Rejected,
}

/// One line of the search log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: Action,
    pub parent: Option<String>,
    pub candidate: String,
    pub flops: u64,
    pub score: Option<f64>,
    pub reason: Option<String>,
    pub removed: Option<String>,
    pub population: usize,
    pub best: String,
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchLog {
    pub records: Vec<StepRecord>,
}

impl SearchLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn parse_jsonl(text: &str) -> Result<SearchLog> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::parse(None, format!("log line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SearchLog { records })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub genome: Genome,
    pub score: f64,
    pub flops: u64,
    pub inserted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Genome,
    pub best_score: f64,
    pub best_flops: u64,
    pub population: Vec<Member>,
    pub log: SearchLog,
}

/// Highest score; ties go to the lexicographically smallest gene vector.
fn argmax(pop: &[Member]) -> &Member {
    pop.iter()
        .reduce(|a, b| {
            if b.score > a.score || (b.score == a.score && b.genome.genes < a.genome.genes) {
                b
            } else {
                a
            }
        })
        .expect("population is never empty")
}

/// Runs the search from the minimal genome of the scorer's space.
pub fn evolve<S: Scorer>(cfg: &SearchConfig, scorer: &mut S) -> Result<SearchOutcome> {
    cfg.validate()?;
    scorer.space().validate()?;
    let space = scorer.space().clone();
    let f0 = space.minimal();
    let f0_flops = scorer.flops(&f0)?;
    if f0_flops > cfg.budget {
        return Err(Error::validation(format!(
            "initial genome {} needs {f0_flops} MACs, above the budget {}",
            f0.key(),
            cfg.budget
        )));
    }
    let f0_score = scorer.score(&f0)?;
    let mut pop = vec![Member {
        genome: f0.clone(),
        score: f0_score,
        flops: f0_flops,
        inserted: 0,
    }];
    let mut records = vec![StepRecord {
        step: 0,
        action: Action::Init,
        parent: None,
        candidate: f0.key(),
        flops: f0_flops,
        score: Some(f0_score),
        reason: None,
        removed: None,
        population: 1,
        best: f0.key(),
        best_score: f0_score,
    }];
    let mut r = rng::rng_from_seed(rng::child_seed(cfg.seed, "evolve"));
    for step in 1..=cfg.steps {
        let parent = pop[r.random_range(0..pop.len())].genome.clone();
        let child = space.mutate(&parent, rng::indexed_seed(cfg.seed, "mutate", step as u64));
        let flops = scorer.flops(&child)?;
        let mut rec = StepRecord {
            step,
            action: Action::Rejected,
            parent: Some(parent.key()),
            candidate: child.key(),
            flops,
            score: None,
            reason: None,
            removed: None,
            population: pop.len(),
            best: String::new(),
            best_score: 0.0,
        };
        if flops > cfg.budget {
            rec.reason = Some(format!("{flops} MACs exceed budget {}", cfg.budget));
        } else {
            let score = scorer.score(&child)?;
            pop.push(Member {
                genome: child,
                score,
                flops,
                inserted: step,
            });
            if pop.len() > cfg.population {
                // Lowest score, oldest first among equals.
                let worst = (0..pop.len())
                    .reduce(|a, b| if pop[b].score < pop[a].score { b } else { a })
                    .expect("non-empty");
                rec.removed = Some(pop.remove(worst).genome.key());
            }
            rec.action = Action::Accepted;
            rec.score = Some(score);
            rec.population = pop.len();
        }
        let best = argmax(&pop);
        rec.best = best.genome.key();
        rec.best_score = best.score;
        records.push(rec);
    }
    let best = argmax(&pop).clone();
    Ok(SearchOutcome {
        best: best.genome,
        best_score: best.score,
        best_flops: best.flops,
        population: pop,
        log: SearchLog { records },
    })
}

/// Exhaustive argmax over every genome within budget; ties go to the
/// lexicographically smallest gene vector.
pub fn brute_force_best<S: Scorer>(budget: u64, scorer: &mut S) -> Result<(Genome, f64)> {
    let space = scorer.space().clone();
    if space.size() > MAX_BRUTE_FORCE {
        return Err(Error::Capacity(format!(
            "space holds {} genomes, brute-force limit is {MAX_BRUTE_FORCE}",
            space.size()
        )));
    }
    let mut best: Option<(Genome, f64)> = None;
    for g in space.enumerate()? {
        if scorer.flops(&g)? > budget {
            continue;
        }
        let s = scorer.score(&g)?;
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((g, s));
        }
    }
    best.ok_or(Error::EmptyFeasibleSet { budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{SpaceKind, WidthSpace};

    /// Scores by the sum of genes; costs by the largest gene.
    struct Toy(SpaceConfig);

    impl Scorer for Toy {
        fn space(&self) -> &SpaceConfig {
            &self.0
        }
        fn flops(&mut self, g: &Genome) -> Result<u64> {
            Ok(*g.genes.iter().max().unwrap() as u64)
        }
        fn score(&mut self, g: &Genome) -> Result<f64> {
            Ok(g.genes.iter().sum::<u32>() as f64)
        }
    }

    fn toy() -> Toy {
        Toy(SpaceConfig::Width(WidthSpace::default()))
    }

    fn cfg(steps: usize, budget: u64) -> SearchConfig {
        SearchConfig {
            steps,
            budget,
            population: 4,
            seed: 3,
        }
    }

    #[test]
    fn zero_steps_return_initial_genome() {
        let out = evolve(&cfg(0, 100), &mut toy()).unwrap();
        assert_eq!(out.best.genes, vec![4, 4, 4]);
        assert_eq!(out.log.records.len(), 1);
    }

    #[test]
    fn tight_budget_keeps_initial_genome() {
        let out = evolve(&cfg(50, 4), &mut toy()).unwrap();
        assert_eq!(out.population.len(), 1);
        assert_eq!(out.best.genes, vec![4, 4, 4]);
        assert!(out.log.records[1..]
            .iter()
            .all(|r| r.action == Action::Rejected));
    }

    #[test]
    fn infeasible_start_and_empty_feasible_set() {
        assert!(matches!(
            evolve(&cfg(5, 3), &mut toy()),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            brute_force_best(3, &mut toy()),
            Err(Error::EmptyFeasibleSet { budget: 3 })
        ));
    }

    #[test]
    fn finds_the_brute_force_optimum() {
        let mut t = toy();
        let (g, s) = brute_force_best(16, &mut t).unwrap();
        assert_eq!(g.genes, vec![16, 16, 16]);
        let out = evolve(&cfg(300, 16), &mut t).unwrap();
        assert_eq!((out.best, out.best_score), (g, s));
        assert_eq!(
            brute_force_best(u64::MAX, &mut t).unwrap().0,
            Genome {
                space: SpaceKind::Width,
                genes: vec![32; 3]
            }
        );
    }

    #[test]
    fn log_round_trips() {
        let out = evolve(&cfg(20, 16), &mut toy()).unwrap();
        let text = out.log.to_jsonl();
        assert_eq!(SearchLog::parse_jsonl(&text).unwrap(), out.log);
    }
}
