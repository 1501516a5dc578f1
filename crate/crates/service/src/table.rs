//! Plain-text tables for the terminal.

use polestar_core::engine::RouteResponse;

fn minutes(s: f64) -> String {
    format!("{:.0} min", s / 60.0)
}

pub fn route_table(r: &RouteResponse) -> String {
    let mut out = format!(
        "city {} · depart {} · {} route(s) · order: {}{}\n\n",
        r.city,
        r.query.depart_ts,
        r.routes.len(),
        r.ordering,
        if r.flags.partial { " · PARTIAL (time budget exceeded)" } else { "" }
    );
    out.push_str("rank  score     ETA      distance   fare   walk     transfers  lines\n");
    for route in &r.routes {
        let t = &route.totals;
        let lines: Vec<&str> = route.segments.iter().map(|s| s.line_name.as_str()).collect();
        out.push_str(&format!(
            "{:<5} {:<9} {:<8} {:>7.1} km  {:>5.2}  {:>5.0} m  {:<10} {}\n",
            route.rank,
            route.score.map_or("-".into(), |s| format!("{s:.4}")),
            minutes(t.eta_s),
            t.distance_m / 1000.0,
            t.fare,
            t.walk_m,
            t.transfers,
            lines.join(" → ")
        ));
    }
    out.push('\n');
    for route in &r.routes {
        out.push_str(&format!("#{} ({})\n", route.rank, route.route_id));
        for s in &route.segments {
            out.push_str(&format!(
                "    {:<8} {:<14} {} → {}  ({} stop{}, {})\n",
                s.mode.as_str(),
                s.line_name,
                s.board_name,
                s.alight_name,
                s.stops,
                if s.stops == 1 { "" } else { "s" },
                minutes(s.duration_s)
            ));
        }
    }
    out
}

/// `rank  feature  relative gain`, top `limit` rows.
pub fn importance_table(rows: &[(String, f64)], limit: usize) -> String {
    let width = rows.iter().take(limit).map(|(n, _)| n.len()).max().unwrap_or(7).max(7);
    let mut out = format!("{:<5} {:<width$}  gain\n", "rank", "feature");
    for (i, (name, g)) in rows.iter().take(limit).enumerate() {
        out.push_str(&format!("{:<5} {:<width$}  {:.4}\n", i + 1, name, g));
    }
    if rows.is_empty() {
        out.push_str("(model has no splits)\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn importance_rows_are_ranked_and_truncated() {
        let rows = vec![("eta_s".to_string(), 1.0), ("walk_m".to_string(), 0.5), ("fare".to_string(), 0.1)];
        let t = importance_table(&rows, 2);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1") && lines[1].contains("eta_s") && lines[1].ends_with("1.0000"));
        assert!(!t.contains("fare"));
    }
}
