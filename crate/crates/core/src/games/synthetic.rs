//! Synthetic test games with known structure, plus the spec-string
//! mini-language used by the CLI (`kind:key=value,...`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::games::{validate_player_count, Coalition, Game};

/// Cap on players for the memoized random game (its value table has `2^d`
/// entries).
pub const RANDOM_GAME_CAP: usize = 20;

/// Additive game `v(z) = beta_0 + sum_{i in z} beta_i`; its Shapley values
/// are exactly the coefficients.
#[derive(Debug, Clone)]
pub struct InessentialGame {
    intercept: f64,
    coefficients: Vec<f64>,
}

impl InessentialGame {
    pub fn new(intercept: f64, coefficients: Vec<f64>) -> Result<Self> {
        validate_player_count(coefficients.len())?;
        Ok(InessentialGame { intercept, coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

impl Game for InessentialGame {
    fn player_count(&self) -> usize {
        self.coefficients.len()
    }

    fn evaluate(&self, coalition: &Coalition) -> f64 {
        self.intercept + coalition.iter_ones().map(|i| self.coefficients[i]).sum::<f64>()
    }
}

/// `v(z) = 1` iff every player of `required` is in the coalition.
#[derive(Debug, Clone)]
pub struct UnanimityGame {
    d: usize,
    required: Vec<usize>,
}

impl UnanimityGame {
    pub fn new(d: usize, required: Vec<usize>) -> Result<Self> {
        validate_player_count(d)?;
        if required.is_empty() {
            return Err(Error::Config("unanimity game requires a nonempty player set".into()));
        }
        if required.iter().any(|&i| i >= d) {
            return Err(Error::Config("unanimity player index out of range".into()));
        }
        Ok(UnanimityGame { d, required })
    }

    pub fn required(&self) -> &[usize] {
        &self.required
    }
}

impl Game for UnanimityGame {
    fn player_count(&self) -> usize {
        self.d
    }

    fn evaluate(&self, coalition: &Coalition) -> f64 {
        if self.required.iter().all(|&i| coalition.contains(i)) {
            1.0
        } else {
            0.0
        }
    }
}

/// `v(z) = 1` iff a strict majority of players is present.
#[derive(Debug, Clone)]
pub struct MajorityGame {
    d: usize,
}

impl MajorityGame {
    pub fn new(d: usize) -> Result<Self> {
        validate_player_count(d)?;
        Ok(MajorityGame { d })
    }
}

impl Game for MajorityGame {
    fn player_count(&self) -> usize {
        self.d
    }

    fn evaluate(&self, coalition: &Coalition) -> f64 {
        if 2 * coalition.size() > self.d {
            1.0
        } else {
            0.0
        }
    }
}

/// A game whose `2^d` values are i.i.d. uniform `[0,1)` draws from a seeded
/// generator. The full table is materialized at construction so repeated
/// evaluation is consistent and thread-safe.
#[derive(Debug, Clone)]
pub struct RandomGame {
    d: usize,
    values: Vec<f64>,
}

impl RandomGame {
    pub fn new(seed: u64, d: usize) -> Result<Self> {
        validate_player_count(d)?;
        if d > RANDOM_GAME_CAP {
            return Err(Error::EnumerationTooLarge { d, cap: RANDOM_GAME_CAP });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..(1usize << d)).map(|_| rng.gen::<f64>()).collect();
        Ok(RandomGame { d, values })
    }
}

impl Game for RandomGame {
    fn player_count(&self) -> usize {
        self.d
    }

    fn evaluate(&self, coalition: &Coalition) -> f64 {
        self.values[coalition.mask() as usize]
    }
}

/// Parses a synthetic game spec string.
///
/// Grammar: `kind:key=value,...` where a value may itself be a comma list
/// (a token without `=` continues the previous key). Player indices in
/// specs are 1-based. Examples:
///
/// - `inessential:beta=0.5,1,2` (optional `beta0=`)
/// - `unanimity:d=3,T=1,2`
/// - `majority:d=5`
/// - `random:d=8,seed=7`
pub fn parse_game_spec(spec: &str) -> Result<Box<dyn Game>> {
    let (kind, rest) = match spec.split_once(':') {
        Some((k, r)) => (k.trim(), r),
        None => (spec.trim(), ""),
    };
    let args = parse_key_values(rest)?;
    let get = |key: &str| args.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_slice());
    let parse_usize = |key: &str| -> Result<Option<usize>> {
        match get(key) {
            None => Ok(None),
            Some([v]) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| Error::Parse(format!("invalid integer for '{key}': {v}"))),
            Some(_) => Err(Error::Parse(format!("'{key}' expects a single value"))),
        }
    };

    match kind {
        "inessential" => {
            let beta = get("beta")
                .ok_or_else(|| Error::Parse("inessential spec requires beta=<list>".into()))?;
            let coefficients = parse_f64_list(beta)?;
            let intercept = match get("beta0") {
                None => 0.0,
                Some([v]) => v
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("invalid beta0: {v}")))?,
                Some(_) => return Err(Error::Parse("beta0 expects a single value".into())),
            };
            if let Some(d) = parse_usize("d")? {
                if d != coefficients.len() {
                    return Err(Error::Parse(format!(
                        "d={} does not match beta length {}",
                        d,
                        coefficients.len()
                    )));
                }
            }
            Ok(Box::new(InessentialGame::new(intercept, coefficients)?))
        }
        "unanimity" => {
            let d = parse_usize("d")?
                .ok_or_else(|| Error::Parse("unanimity spec requires d=<int>".into()))?;
            let raw = get("T")
                .ok_or_else(|| Error::Parse("unanimity spec requires T=<players>".into()))?;
            let mut required = Vec::with_capacity(raw.len());
            for v in raw {
                let player: usize = v
                    .parse()
                    .map_err(|_| Error::Parse(format!("invalid player index: {v}")))?;
                if player == 0 {
                    return Err(Error::Parse("player indices in specs are 1-based".into()));
                }
                required.push(player - 1);
            }
            Ok(Box::new(UnanimityGame::new(d, required)?))
        }
        "majority" => {
            let d = parse_usize("d")?
                .ok_or_else(|| Error::Parse("majority spec requires d=<int>".into()))?;
            Ok(Box::new(MajorityGame::new(d)?))
        }
        "random" => {
            let d = parse_usize("d")?
                .ok_or_else(|| Error::Parse("random spec requires d=<int>".into()))?;
            let seed = match get("seed") {
                None => 0,
                Some([v]) => v
                    .parse::<u64>()
                    .map_err(|_| Error::Parse(format!("invalid seed: {v}")))?,
                Some(_) => return Err(Error::Parse("seed expects a single value".into())),
            };
            Ok(Box::new(RandomGame::new(seed, d)?))
        }
        other => Err(Error::Parse(format!("unknown synthetic game kind '{other}'"))),
    }
}

/// Splits `key=value,...` where a comma token without `=` extends the
/// previous key's value list.
fn parse_key_values(rest: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut args: Vec<(String, Vec<String>)> = Vec::new();
    for token in rest.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        match token.split_once('=') {
            Some((key, value)) => {
                let key = key.trim().to_string();
                if args.iter().any(|(k, _)| *k == key) {
                    return Err(Error::Parse(format!("duplicate key '{key}'")));
                }
                args.push((key, vec![value.trim().to_string()]));
            }
            None => match args.last_mut() {
                Some((_, values)) => values.push(token.to_string()),
                None => return Err(Error::Parse(format!("stray value '{token}' before any key"))),
            },
        }
    }
    Ok(args)
}

fn parse_f64_list(values: &[String]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("invalid number: {v}"))))
        .collect()
}
