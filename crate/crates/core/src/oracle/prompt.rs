use std::fmt::Write;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTerrain {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotDescription {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub locomotion: String,
    pub references: Vec<ReferenceTerrain>,
}

impl Default for RobotDescription {
    fn default() -> Self {
        let r = |name: &str, value| ReferenceTerrain { name: name.into(), value };
        Self {
            width: 0.35,
            length: 0.5,
            height: 0.35,
            locomotion: "four-wheeled skid-steer platform with 10 cm ground clearance; \
                         handles short grass and packed dirt, cannot climb over rocks, \
                         logs or walls"
                .into(),
            references: vec![
                r("flat pavement or indoor floor", 1.0),
                r("short grass", 0.8),
                r("tall grass or loose gravel", 0.5),
                r("dense bushes", 0.2),
                r("walls, trees, rocks and other obstacles", 0.0),
            ],
        }
    }
}

impl RobotDescription {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("width", self.width), ("length", self.length), ("height", self.height)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("robot {name} must be positive")));
            }
        }
        if self.references.len() < 2 {
            return Err(Error::validation("at least two reference terrains are required"));
        }
        if let Some(r) = self.references.iter().find(|r| !(0.0..=1.0).contains(&r.value)) {
            return Err(Error::validation(format!("reference value for {:?} outside [0, 1]", r.name)));
        }
        Ok(())
    }
}

pub fn build_prompt(robot: &RobotDescription, n_regions: u32) -> String {
    let n = n_regions.max(1);
    let (regions, numbers) = if n == 1 { ("region", "number") } else { ("regions", "numbers") };
    let mut s = String::new();
    s.push_str("You are helping a ground robot decide where it can drive safely.\n\n");
    s.push_str("Robot:\n");
    let _ = writeln!(
        s,
        "- size: {:.2} m long, {:.2} m wide, {:.2} m tall",
        robot.length, robot.width, robot.height
    );
    let _ = writeln!(s, "- locomotion: {}", robot.locomotion);
    s.push_str("\nReference traversability values (0 = cannot be crossed, 1 = fully traversable):\n");
    for r in &robot.references {
        let _ = writeln!(s, "- {}: {}", r.name, r.value);
    }
    let _ = writeln!(
        s,
        "\nThe attached image is divided into {n} numbered {regions}. For each {}, \
         estimate how traversable its terrain is for this robot, using the references above \
         as anchors.",
        if n == 1 { "region" } else { "numbered region" }
    );
    let order = if n == 1 { String::new() } else { format!(", in order from region 1 to region {n}") };
    let _ = write!(
        s,
        "\nReply with a list of {n} {numbers} in [0, 1], one per numbered region{order}, \
         written as a Python list, and nothing else."
    );
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    pub values: Vec<f64>,
    /// How many entries were pulled into [0, 1].
    pub clamped: usize,
}

fn list_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([^\[\]]*)\]").expect("static regex"))
}

fn numeric_list(body: &str) -> Option<Vec<f64>> {
    let mut items: Vec<&str> = body.split(',').map(str::trim).collect();
    // tolerate one trailing comma
    if items.len() > 1 && items.last() == Some(&"") {
        items.pop();
    }
    if items.len() == 1 && items[0].is_empty() {
        return Some(Vec::new());
    }
    items
        .iter()
        .map(|t| {
            let first = t.chars().next()?;
            // rejects words such as "nan" or "inf" that f64 parsing would accept
            if !(first.is_ascii_digit() || matches!(first, '+' | '-' | '.')) {
                return None;
            }
            t.parse::<f64>().ok().filter(|v| v.is_finite())
        })
        .collect()
}

/// Takes the first bracketed list of numbers in `text`, clamped to [0, 1].
pub fn parse_reply(text: &str, n_regions: u32) -> Result<ParsedReply> {
    let raw = list_re()
        .captures_iter(text)
        .find_map(|c| numeric_list(c.get(1).map_or("", |m| m.as_str())))
        .ok_or(Error::Parse)?;
    if raw.len() != n_regions as usize {
        return Err(Error::Length { expected: n_regions as usize, got: raw.len() });
    }
    let mut clamped = 0;
    let values = raw
        .into_iter()
        .map(|v| {
            let c = v.clamp(0.0, 1.0);
            if c != v {
                clamped += 1;
            }
            c
        })
        .collect();
    Ok(ParsedReply { values, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_refs() -> RobotDescription {
        RobotDescription {
            references: vec![
                ReferenceTerrain { name: "gravel".into(), value: 0.65 },
                ReferenceTerrain { name: "boulder".into(), value: 0.05 },
            ],
            ..RobotDescription::default()
        }
    }

    #[test]
    fn prompt_contents() {
        let p = build_prompt(&two_refs(), 3);
        for needle in ["3 numbered regions", "list of 3 numbers", "gravel: 0.65", "boulder: 0.05", "0.50 m long"] {
            assert!(p.contains(needle), "missing {needle:?}\n{p}");
        }
        assert_eq!(p, build_prompt(&two_refs(), 3));
        let one = build_prompt(&two_refs(), 1);
        assert!(one.contains("1 numbered region.") && one.contains("list of 1 number in"));
    }

    #[test]
    fn parse_examples() {
        let r = parse_reply("Here are the values: [0.9, 0.1, 0.5]", 3).unwrap();
        assert_eq!(r.values, vec![0.9, 0.1, 0.5]);
        assert_eq!(r.clamped, 0);
        let r = parse_reply("[1.4, -0.2]", 2).unwrap();
        assert_eq!(r.values, vec![1.0, 0.0]);
        assert_eq!(r.clamped, 2);
        let r = parse_reply("Sure! Region values... [0.3, 0.3] ... also [9, 9]", 2).unwrap();
        assert_eq!(r.values, vec![0.3, 0.3]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_reply("no list here", 2), Err(Error::Parse)));
        assert!(matches!(parse_reply("[nan, 0.2]", 2), Err(Error::Parse)));
        assert!(matches!(parse_reply("[0.1, 0.2, 0.3]", 2), Err(Error::Length { expected: 2, got: 3 })));
        // a non-numeric list is skipped in favour of the next numeric one
        assert_eq!(parse_reply("regions [a, b] -> [0.2, 0.4,]", 2).unwrap().values, vec![0.2, 0.4]);
    }

    #[test]
    fn robot_validation() {
        assert!(RobotDescription::default().validate().is_ok());
        let mut r = two_refs();
        r.references.pop();
        assert!(r.validate().is_err());
        let mut r = two_refs();
        r.references[0].value = 1.5;
        assert!(r.validate().is_err());
    }
}
