//! Routes p1 → p6 through the six-station city and prints the shortlist.
//!
//!     cargo run -p polestar-core --example worked_example

use polestar_core::binder::BinderConfig;
use polestar_core::engine::{Engine, PipelineSettings, RouteQuery};
use polestar_core::fixtures::{near_station, six_station_city};
use polestar_core::ptg::WeightConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let city = six_station_city();
    let engine = Engine::build(
        [(city.city.clone(), city)].into_iter().collect(),
        &WeightConfig::default(),
        &BinderConfig::default(),
        None,
        PipelineSettings::default(),
    )?;
    let q = RouteQuery { origin: near_station("p1"), destination: near_station("p6"), depart_ts: 1_700_035_200, weather: None };
    let (resp, timings) = engine.handle_route_query(&q)?;
    for r in &resp.routes {
        let legs: Vec<String> =
            r.segments.iter().map(|s| format!("{} {}→{}", s.line_name, s.board_station, s.alight_station)).collect();
        println!("#{} {:>5.1} min {:>5.0} m walk  {}", r.rank, r.totals.eta_s / 60.0, r.totals.walk_m, legs.join(", "));
    }
    println!("answered in {:.2} ms", timings.total().as_secs_f64() * 1e3);
    Ok(())
}
