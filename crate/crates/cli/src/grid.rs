/// Parses `a,b,c` or `start:stop:step` (stop included when hit up to
/// rounding). Grid points are rounded to 12 decimals.
pub fn parse_q_list(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("invalid quantile level {s:?}"))
    };
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("grid must be start:stop:step, got {spec:?}"));
        };
        let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
        if !(step > 0.0) || stop < start {
            return Err(format!("grid needs step > 0 and stop >= start, got {spec:?}"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let v = start + i as f64 * step;
                format!("{v:.12}").parse::<f64>().expect("formatted float")
            })
            .collect()
    } else {
        spec.split(',').map(number).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err("no quantile levels given".into());
    }
    if let Some(q) = values.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
        return Err(format!("quantile level {q} is outside (0, 1)"));
    }
    Ok(values)
}
