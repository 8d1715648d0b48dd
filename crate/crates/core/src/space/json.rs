use serde_json::{json, Value};

use super::{CellOp, Genome, SpaceKind};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u64 = 1;

pub fn serialize(g: &Genome) -> String {
    json!({
        "schema_version": SCHEMA_VERSION,
        "space": g.space.tag(),
        "genes": g.genes,
    })
    .to_string()
}

/// Parses a genome document. Cell genes must be valid op codes and width
/// genes positive; membership in a particular config is checked separately.
pub fn parse(text: &str) -> Result<Genome> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::parse(None, e.to_string()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::parse(None, "genome document must be a JSON object"))?;
    if let Some(ver) = obj.get("schema_version") {
        if ver.as_u64() != Some(SCHEMA_VERSION) {
            return Err(Error::parse(
                None,
                format!("unsupported schema_version {ver}"),
            ));
        }
    }
    let space = match obj.get("space").map(|s| s.as_str()) {
        None => return Err(Error::parse(None, "missing \"space\" field")),
        Some(Some("cell")) => SpaceKind::Cell,
        Some(Some("width")) => SpaceKind::Width,
        Some(other) => {
            return Err(Error::parse(
                None,
                format!(
                    "unknown space tag {}",
                    other.map_or_else(|| obj["space"].to_string(), str::to_string)
                ),
            ))
        }
    };
    let genes = obj
        .get("genes")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(None, "missing \"genes\" array"))?;
    let mut out = Vec::with_capacity(genes.len());
    for (p, gv) in genes.iter().enumerate() {
        let v = gv
            .as_u64()
            .filter(|&v| v <= u32::MAX as u64)
            .ok_or_else(|| Error::parse(Some(p), format!("{gv} is not a gene value")))?
            as u32;
        let ok = match space {
            SpaceKind::Cell => CellOp::from_code(v).is_some(),
            SpaceKind::Width => v > 0,
        };
        if !ok {
            return Err(Error::parse(
                Some(p),
                format!("value {v} outside the {} alphabet", space.tag()),
            ));
        }
        out.push(v);
    }
    Ok(Genome { space, genes: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors() {
        let e = parse(r#"{"space":"cell","genes":[0,1,7,0,0,0]}"#).unwrap_err();
        assert!(
            matches!(
                e,
                Error::Parse {
                    position: Some(2),
                    ..
                }
            ),
            "{e}"
        );
        let e = parse(r#"{"genes":[0]}"#).unwrap_err();
        assert!(e.to_string().contains("space"), "{e}");
        assert!(parse(r#"{"space":"mobile","genes":[]}"#).is_err());
        assert!(parse("[1,2]").is_err());
    }

    #[test]
    fn round_trip() {
        let g = Genome {
            space: SpaceKind::Width,
            genes: vec![8, 32, 4],
        };
        let text = serialize(&g);
        assert_eq!(
            text,
            r#"{"genes":[8,32,4],"schema_version":1,"space":"width"}"#
        );
        assert_eq!(parse(&text).unwrap(), g);
    }
}
