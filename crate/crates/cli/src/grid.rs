//! Scalar-or-grid argument parsing. A grid spec is `start:stop:steps` with
//! both endpoints included; `steps = 1` collapses to the single value
//! `start`. A bare number is a one-point grid.

use std::str::FromStr;

#[derive(Debug, Clone)]
pub struct Grid(Vec<f64>);

impl Grid {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [single] => {
                let v: f64 = single
                    .parse()
                    .map_err(|_| format!("`{s}` is not a number"))?;
                Ok(Grid(vec![v]))
            }
            [start, stop, steps] => {
                let start: f64 = start
                    .parse()
                    .map_err(|_| format!("bad grid start in `{s}`"))?;
                let stop: f64 = stop
                    .parse()
                    .map_err(|_| format!("bad grid stop in `{s}`"))?;
                let steps: usize = steps
                    .parse()
                    .map_err(|_| format!("bad grid step count in `{s}`"))?;
                if steps == 0 {
                    return Err(format!("grid `{s}` needs at least one step"));
                }
                if steps == 1 {
                    return Ok(Grid(vec![start]));
                }
                let h = (stop - start) / (steps - 1) as f64;
                Ok(Grid(
                    (0..steps)
                        .map(|i| {
                            if i + 1 == steps {
                                stop
                            } else {
                                start + h * i as f64
                            }
                        })
                        .collect(),
                ))
            }
            _ => Err(format!("`{s}` is neither a number nor start:stop:steps")),
        }
    }
}

/// Comma-separated list of detection delays, e.g. `0,1,2,3`.
pub fn parse_b_list(s: &str) -> Result<Vec<u32>, String> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<u32>()
                .map_err(|_| format!("`{part}` is not a nonnegative integer"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_is_single_point() {
        let g: Grid = "0.4".parse().unwrap();
        assert_eq!(g.values(), &[0.4]);
    }

    #[test]
    fn grid_includes_endpoints() {
        let g: Grid = "0:1:5".parse().unwrap();
        assert_eq!(g.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g: Grid = "0.2:0.2:1".parse().unwrap();
        assert_eq!(g.values(), &[0.2]);
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!("".parse::<Grid>().is_err());
        assert!("1:2".parse::<Grid>().is_err());
        assert!("1:2:0".parse::<Grid>().is_err());
        assert!("a:b:c".parse::<Grid>().is_err());
    }

    #[test]
    fn b_lists() {
        assert_eq!(parse_b_list("0,1,2,3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_b_list("2").unwrap(), vec![2]);
        assert!(parse_b_list("1,-2").is_err());
    }
}
