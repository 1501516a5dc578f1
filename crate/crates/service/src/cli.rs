//! `polestar` subcommands.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use polestar_core::binder::{build_city_cache, save_cache_set, BinderConfig, CacheSet};
use polestar_core::engine::{Engine, PipelineSettings, RouteQuery};
use polestar_core::eval::{format_report, queries_of, run_benchmark, synth_query_log, SynthLogParams, DEFAULT_BUCKETS_M};
use polestar_core::fixtures::six_station_city;
use polestar_core::model::io::{load_datasets, load_query_log, write_city_dataset, write_query_log};
use polestar_core::model::CityDataset;
use polestar_core::ptg::io::{load_ptg, save_ptg};
use polestar_core::ptg::{compile_ptg, dataset_hash, Ptg, WeightConfig};
use polestar_core::rerank::io::{load_model, save_model};
use polestar_core::rerank::{build_training_set, train, CityProfile, GbdtParams, RankModel};
use polestar_core::synth::{synthetic_city, SyntheticCityParams};

use crate::config::{load_engine_config, load_or_default};
use crate::http::{now_epoch, parse_point, parse_weather, router, AppState, EngineSlot};
use crate::table::{importance_table, route_table};

#[derive(Debug, Parser)]
#[command(name = "polestar", version, about = "Multi-modal public transit routing with learned route ranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// The six-station worked-example city.
    Fixture,
    /// 600 stations, about 54 lines.
    Small,
    /// 5,000 stations, 300 lines.
    Large,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile city datasets into a routing graph file.
    Compile {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// weights.toml; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Precompute station-to-road walking distances.
    BindCache {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ptg: PathBuf,
        /// Cache radius in meters.
        #[arg(long, default_value_t = 1500.0)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
        /// binder.toml; `--lambda` wins over its `lambda_m`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the reranking model on a query log.
    Train {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ptg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// params.toml with any of tau, lambda1, lambda2, beta, n_trees, max_depth, min_leaf, max_bins.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Print a trained model's features by split gain.
    Importance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Latency by trip distance and NDCG against the baselines.
    Eval {
        #[arg(long)]
        ptg: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        /// Without a model only the baselines are scored.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a query log with a planted preference.
    SynthLog {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ptg: PathBuf,
        /// Built in memory when omitted.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Chance of a random choice instead of the preferred route.
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic city dataset.
    SynthCity {
        #[arg(long, value_enum, default_value_t = Preset::Small)]
        preset: Preset,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Parent directory; the city is written to `<out>/<city>/`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "engine.toml")]
        config: PathBuf,
        /// Overrides `listen` from the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Answer one route query and print it.
    Query {
        #[arg(long, default_value = "engine.toml")]
        config: PathBuf,
        /// Origin as <lat>,<lon>.
        #[arg(long = "o", allow_hyphen_values = true)]
        origin: String,
        /// Destination as <lat>,<lon>.
        #[arg(long = "d", allow_hyphen_values = true)]
        destination: String,
        /// Departure, epoch seconds; now when omitted.
        #[arg(long = "t")]
        time: Option<i64>,
        #[arg(long)]
        weather: Option<String>,
        /// Print the JSON response instead of a table.
        #[arg(long)]
        json: bool,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compile { data, out, config } => compile(&data, &out, config.as_deref()),
        Command::BindCache { data, ptg, lambda, out, config } => bind_cache(&data, &ptg, lambda, &out, config.as_deref()),
        Command::Train { log, data, ptg, out, params } => train_cmd(&log, &data, &ptg, &out, params.as_deref()),
        Command::Importance { model, top } => {
            let m = load_model(&model).with_context(|| format!("loading {}", model.display()))?;
            print!("{}", importance_table(&m.feature_importance(), top));
            Ok(())
        }
        Command::Eval { ptg, cache, model, log, data, out } => eval_cmd(&ptg, &cache, model.as_deref(), &log, &data, &out),
        Command::SynthLog { data, ptg, cache, n, seed, epsilon, out } => {
            synth_log(&data, &ptg, cache.as_deref(), n, seed, epsilon, &out)
        }
        Command::SynthCity { preset, seed, out } => synth_city(preset, seed, &out),
        Command::Serve { config, listen } => serve(&config, listen),
        Command::Query { config, origin, destination, time, weather, json } => {
            let cfg = load_engine_config(&config)?;
            let engine = Engine::load(&cfg)?;
            let q = RouteQuery {
                origin: parse_point(&origin).map_err(anyhow::Error::msg)?,
                destination: parse_point(&destination).map_err(anyhow::Error::msg)?,
                depart_ts: time.unwrap_or_else(now_epoch),
                weather: weather.as_deref().map(parse_weather).transpose().map_err(anyhow::Error::msg)?,
            };
            let (response, _) = engine.handle_route_query(&q).map_err(|e| anyhow::anyhow!("{} ({})", e, e.code()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&response)?);
            } else {
                print!("{}", route_table(&response));
            }
            Ok(())
        }
    }
}

fn datasets(dir: &Path) -> Result<BTreeMap<String, CityDataset>> {
    let ds = load_datasets(dir).with_context(|| format!("loading datasets from {}", dir.display()))?;
    if ds.is_empty() {
        bail!("no city datasets under {}", dir.display());
    }
    Ok(ds)
}

fn ptg_for(path: &Path, datasets: &BTreeMap<String, CityDataset>) -> Result<Ptg> {
    let ptg = load_ptg(path).with_context(|| format!("loading {}", path.display()))?;
    if ptg.meta.dataset_hash != dataset_hash(datasets.values()) {
        bail!("{} was compiled from different datasets; rerun `polestar compile`", path.display());
    }
    Ok(ptg)
}

fn compile(data: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let weights: WeightConfig = load_or_default(config)?;
    let ds = datasets(data)?;
    let t = Instant::now();
    let ptg = compile_ptg(&ds, &weights)?;
    save_ptg(&ptg, out).with_context(|| format!("writing {}", out.display()))?;
    for (id, g) in &ptg.cities {
        println!(
            "{id}: {} stations, {} lines, {} physical edges, {} virtual edges",
            g.physical.stations.len(),
            g.lines.len(),
            g.physical.edges.len(),
            g.virtuals[0].topology.edges.len()
        );
    }
    println!("wrote {} in {:.2?}", out.display(), t.elapsed());
    Ok(())
}

fn caches(ptg: &Ptg, ds: &BTreeMap<String, CityDataset>, cfg: &BinderConfig) -> CacheSet {
    CacheSet {
        cities: ptg.cities.iter().map(|(id, g)| (id.clone(), build_city_cache(g, &ds[id].road, &ds[id].pois, cfg))).collect(),
    }
}

fn bind_cache(data: &Path, ptg: &Path, lambda: f64, out: &Path, config: Option<&Path>) -> Result<()> {
    let mut cfg: BinderConfig = load_or_default(config)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        bail!("--lambda must be a positive number of meters");
    }
    cfg.lambda_m = lambda;
    let ds = datasets(data)?;
    let ptg = ptg_for(ptg, &ds)?;
    let t = Instant::now();
    let set = caches(&ptg, &ds, &cfg);
    save_cache_set(&set, out).with_context(|| format!("writing {}", out.display()))?;
    for (id, c) in &set.cities {
        let entries: usize = c.entries.iter().map(Vec::len).sum();
        println!("{id}: {entries} intersection→station entries within {lambda} m");
    }
    println!("wrote {} in {:.2?}", out.display(), t.elapsed());
    Ok(())
}

fn profiles(ds: &BTreeMap<String, CityDataset>) -> BTreeMap<String, CityProfile> {
    ds.iter().map(|(k, d)| (k.clone(), CityProfile::from_dataset(d))).collect()
}

fn train_cmd(log: &Path, data: &Path, ptg: &Path, out: &Path, params: Option<&Path>) -> Result<()> {
    let params: GbdtParams = load_or_default(params)?;
    let ds = datasets(data)?;
    let ptg = ptg_for(ptg, &ds)?;
    let log = load_query_log(log).with_context(|| format!("loading {}", log.display()))?;
    let unknown = log.entries.iter().filter(|e| !ptg.cities.contains_key(&e.city)).count();
    if unknown > 0 {
        tracing::warn!("{unknown} log entries name cities that are not in the graph");
    }
    if log.dropped_feedback > 0 {
        tracing::warn!("dropped {} feedback records for routes that were never presented", log.dropped_feedback);
    }
    let t = Instant::now();
    let set = build_training_set(&log.entries, &profiles(&ds));
    println!(
        "{} queries with feedback ({} skipped), {} rows × {} features, {} pairs",
        set.queries.len(),
        set.skipped,
        set.rows.len(),
        set.names.len(),
        set.pairs.len()
    );
    let every = (params.n_trees / 10).max(1);
    let model = train(&set, &params, |r| {
        if r.round % every == 0 || r.round == params.n_trees {
            println!(
                "round {:>4}  loss {:>12.4}  objective {:>12.4}  active pairs {}",
                r.round, r.loss, r.objective, r.active_pairs
            );
        }
    })?;
    save_model(out, &model).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} ({} trees) in {:.2?}", out.display(), model.ensemble.trees.len(), t.elapsed());
    Ok(())
}

fn eval_cmd(ptg: &Path, cache: &Path, model: Option<&Path>, log: &Path, data: &Path, out: &Path) -> Result<()> {
    let ds = datasets(data)?;
    let ptg = ptg_for(ptg, &ds)?;
    let caches = polestar_core::binder::load_cache_set(cache).with_context(|| format!("loading {}", cache.display()))?;
    let model: Option<RankModel> =
        model.map(|p| load_model(p).with_context(|| format!("loading {}", p.display()))).transpose()?;
    let log = load_query_log(log).with_context(|| format!("loading {}", log.display()))?;
    let engine = Engine::new(ptg, caches, ds, model, PipelineSettings::default())?;
    let report = run_benchmark(&engine, &queries_of(&log.entries), &DEFAULT_BUCKETS_M, &log.entries);
    std::fs::write(out, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", format_report(&report));
    println!("wrote {}", out.display());
    Ok(())
}

fn synth_log(data: &Path, ptg: &Path, cache: Option<&Path>, n: usize, seed: u64, epsilon: f64, out: &Path) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        bail!("--epsilon must be within [0, 1]");
    }
    let ds = datasets(data)?;
    let ptg = ptg_for(ptg, &ds)?;
    let caches = match cache {
        Some(p) => polestar_core::binder::load_cache_set(p).with_context(|| format!("loading {}", p.display()))?,
        None => caches(&ptg, &ds, &BinderConfig::default()),
    };
    let engine = Engine::new(ptg, caches, ds, None, PipelineSettings::default())?;
    let mut params = SynthLogParams { n_queries: n, seed, ..SynthLogParams::default() };
    params.preference.epsilon = epsilon;
    let t = Instant::now();
    let log = synth_query_log(&engine, &params);
    if log.len() < n {
        tracing::warn!("only {} of {n} queries produced a shortlist", log.len());
    }
    write_query_log(out, &log).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} queries to {} in {:.2?}", log.len(), out.display(), t.elapsed());
    Ok(())
}

fn synth_city(preset: Preset, seed: u64, out: &Path) -> Result<()> {
    let ds = match preset {
        Preset::Fixture => six_station_city(),
        Preset::Small => synthetic_city(&SyntheticCityParams { seed, ..SyntheticCityParams::default() }),
        Preset::Large => synthetic_city(&SyntheticCityParams { seed, ..SyntheticCityParams::large() }),
    };
    let dir = out.join(&ds.city);
    write_city_dataset(&dir, &ds).with_context(|| format!("writing {}", dir.display()))?;
    println!("wrote {}: {} stations, {} lines, {} POIs", dir.display(), ds.stations.len(), ds.lines.len(), ds.pois.len());
    Ok(())
}

fn serve(config: &Path, listen: Option<String>) -> Result<()> {
    let mut cfg = load_engine_config(config)?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    let addr: SocketAddr = cfg.listen.parse().with_context(|| format!("listen address {:?}", cfg.listen))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let slot = EngineSlot::default();
        let state = AppState { engine: slot.clone(), request_timeout: Duration::from_millis(cfg.request_timeout_ms) };
        let app = router(state, cfg.static_dir.clone());
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on http://{addr} (engine loading)");

        // Health answers 503 until this finishes.
        let loader = {
            let (slot, cfg) = (slot.clone(), cfg.clone());
            tokio::task::spawn_blocking(move || -> Result<()> {
                let t = Instant::now();
                let engine = Engine::load(&cfg)?;
                let v = slot.install(engine);
                tracing::info!("engine v{v} loaded in {:.2?}", t.elapsed());
                Ok(())
            })
        };
        reload_on_hangup(slot.clone(), cfg.clone());

        let mut server = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                    tracing::info!("shutting down");
                })
                .await
        });
        tokio::select! {
            r = &mut server => return r?.context("server failed"),
            r = loader => r?.context("loading engine")?,
        }
        server.await?.context("server failed")
    })
}

#[cfg(unix)]
fn reload_on_hangup(slot: EngineSlot, cfg: polestar_core::engine::EngineConfig) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hup) = signal(SignalKind::hangup()) else { return };
    tokio::spawn(async move {
        while hup.recv().await.is_some() {
            let (slot, cfg) = (slot.clone(), cfg.clone());
            let done = tokio::task::spawn_blocking(move || Engine::load(&cfg).map(|e| slot.install(e))).await;
            match done {
                Ok(Ok(v)) => tracing::info!("reloaded artifacts as engine v{v}"),
                Ok(Err(e)) => tracing::error!("reload failed, keeping the current engine: {e}"),
                Err(e) => tracing::error!("reload task failed: {e}"),
            }
        }
    });
}

#[cfg(not(unix))]
fn reload_on_hangup(_: EngineSlot, _: polestar_core::engine::EngineConfig) {}
