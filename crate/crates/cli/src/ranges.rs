//! Parsing of count ranges and scenario overrides.

/// Parse a count spec: a single value `30`, a comma list `1,5,10`, or a
/// range `lo:hi[:step]` (inclusive bounds).
pub fn parse_counts(spec: &str) -> Result<Vec<u32>, String> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err("empty count spec".into());
    }
    let values = if spec.contains(',') {
        spec.split(',')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|_| format!("invalid count `{part}`"))
            })
            .collect::<Result<Vec<_>, _>>()?
    } else if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() > 3 {
            return Err(format!("range `{spec}` has too many `:` separators"));
        }
        let lo: u32 = parts[0]
            .trim()
            .parse()
            .map_err(|_| format!("invalid range start `{}`", parts[0]))?;
        let hi: u32 = parts[1]
            .trim()
            .parse()
            .map_err(|_| format!("invalid range end `{}`", parts[1]))?;
        let step: u32 = if parts.len() == 3 {
            parts[2]
                .trim()
                .parse()
                .map_err(|_| format!("invalid range step `{}`", parts[2]))?
        } else {
            1
        };
        if step == 0 {
            return Err("range step must be positive".into());
        }
        if hi < lo {
            return Err(format!("range `{spec}` is descending"));
        }
        (lo..=hi).step_by(step as usize).collect()
    } else {
        vec![spec
            .parse::<u32>()
            .map_err(|_| format!("invalid count `{spec}`"))?]
    };
    Ok(values)
}

/// Apply one `key=value` override to a scenario JSON document. Keys use
/// dotted paths (`options.initial_j`); values are parsed as JSON when
/// possible and fall back to strings.
pub fn apply_override(doc: &mut serde_json::Value, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
    let value = serde_json::from_str::<serde_json::Value>(raw.trim())
        .unwrap_or_else(|_| serde_json::Value::String(raw.trim().to_string()));
    let mut node = doc;
    let path: Vec<&str> = key.trim().split('.').collect();
    for (depth, part) in path.iter().enumerate() {
        if part.is_empty() {
            return Err(format!("override key `{key}` has an empty path segment"));
        }
        let map = node
            .as_object_mut()
            .ok_or_else(|| format!("override key `{key}` does not address an object"))?;
        if depth + 1 == path.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        node = map
            .entry((*part).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("path is never empty");
}

/// Uniform time grid `0, step, 2·step, …` up to `horizon` (inclusive when it
/// is a multiple of the step). Times are rounded to nanoseconds so grid
/// labels print cleanly.
pub fn time_grid(horizon: f64, step: f64) -> Vec<f64> {
    let count = (horizon / step + 1e-9).floor() as u64;
    (0..=count)
        .map(|k| ((k as f64 * step) * 1e9).round() / 1e9)
        .collect()
}
