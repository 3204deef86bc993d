use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use scribseg::harness::{feature_stand_in, MethodName};
use scribseg::{
    euclidean_edt, geodesic_raster, normalize_map, rgb_reconstruct, BandWeights, BinaryMask,
    ChannelStack, DistanceMap, DistanceParams, Error, ScribbleSet,
};
use tokio::sync::OnceCell;

use crate::ServiceConfig;

/// Method and solver parameters a cached map was computed with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceRequest {
    pub method: MethodName,
    pub lambda: f64,
    pub iters: u32,
}

impl DistanceRequest {
    pub fn params(&self) -> DistanceParams {
        DistanceParams {
            max_iterations: self.iters,
            ..DistanceParams::default().with_lambda(self.lambda)
        }
    }
}

pub(crate) struct CachedMap {
    pub raw: DistanceMap,
    pub normalized: DistanceMap,
    pub min_raw: f32,
    pub max_raw: f32,
    pub compute_ms: f64,
}

type MapCell = Arc<OnceCell<Arc<CachedMap>>>;

struct CacheSlot {
    request: DistanceRequest,
    cell: MapCell,
}

#[derive(Default)]
struct Mutable {
    scribbles: Option<Arc<ScribbleSet>>,
    gt: Option<Arc<BinaryMask>>,
    cache: HashMap<MethodName, CacheSlot>,
}

pub(crate) struct Session {
    pub stack: Arc<ChannelStack>,
    state: Mutex<Mutable>,
    last_touched: Mutex<Instant>,
    // one solver run at a time per session
    compute_lock: tokio::sync::Mutex<()>,
    features: OnceLock<Arc<ChannelStack>>,
    rgb: OnceLock<Arc<ChannelStack>>,
}

pub(crate) enum Lookup {
    Ready(Arc<CachedMap>),
    Pending(MapCell),
}

impl Session {
    fn new(stack: ChannelStack, gt: Option<BinaryMask>) -> Self {
        Self {
            stack: Arc::new(stack),
            state: Mutex::new(Mutable {
                gt: gt.map(Arc::new),
                ..Mutable::default()
            }),
            last_touched: Mutex::new(Instant::now()),
            compute_lock: tokio::sync::Mutex::new(()),
            features: OnceLock::new(),
            rgb: OnceLock::new(),
        }
    }

    pub fn replace_scribbles(&self, scribbles: ScribbleSet) {
        let mut state = self.state.lock();
        state.scribbles = Some(Arc::new(scribbles));
        state.cache.clear();
    }

    pub fn set_gt(&self, gt: BinaryMask) {
        self.state.lock().gt = Some(Arc::new(gt));
    }

    pub fn gt(&self) -> Option<Arc<BinaryMask>> {
        self.state.lock().gt.clone()
    }

    /// The cell for this request, replacing a slot computed with other parameters.
    /// `None` when no scribbles are set.
    pub fn distance_cell(&self, request: DistanceRequest) -> Option<(Lookup, Arc<ScribbleSet>)> {
        let mut state = self.state.lock();
        let scribbles = state.scribbles.clone()?;
        let slot = state
            .cache
            .entry(request.method)
            .and_modify(|slot| {
                if slot.request != request {
                    *slot = CacheSlot {
                        request,
                        cell: Arc::default(),
                    };
                }
            })
            .or_insert_with(|| CacheSlot {
                request,
                cell: Arc::default(),
            });
        let lookup = match slot.cell.get() {
            Some(map) => Lookup::Ready(map.clone()),
            None => Lookup::Pending(slot.cell.clone()),
        };
        Some((lookup, scribbles))
    }

    /// The finished map of a method, if any.
    pub fn cached(&self, method: MethodName) -> Option<Arc<CachedMap>> {
        self.state
            .lock()
            .cache
            .get(&method)
            .and_then(|slot| slot.cell.get().cloned())
    }

    pub async fn compute_lock(&self) -> tokio::sync::MutexGuard<'_, ()> {
        self.compute_lock.lock().await
    }

    fn source(&self, method: MethodName) -> scribseg::Result<Arc<ChannelStack>> {
        let derived = |cell: &OnceLock<Arc<ChannelStack>>,
                       make: &dyn Fn() -> scribseg::Result<ChannelStack>| {
            if let Some(s) = cell.get() {
                return Ok(s.clone());
            }
            let made = Arc::new(make()?);
            Ok(cell.get_or_init(|| made).clone())
        };
        match method {
            MethodName::Features => derived(&self.features, &|| feature_stand_in(&self.stack)),
            MethodName::Rgb => derived(&self.rgb, &|| {
                rgb_reconstruct(
                    &self.stack,
                    &BandWeights::band_thirds(self.stack.channels()),
                )
            }),
            MethodName::Hyperspectral | MethodName::Euclidean => Ok(self.stack.clone()),
        }
    }

    /// Runs the solver for one request; blocking.
    pub fn solve(
        &self,
        request: DistanceRequest,
        scribbles: &ScribbleSet,
    ) -> scribseg::Result<CachedMap> {
        let started = Instant::now();
        let raw = match request.method {
            MethodName::Euclidean => {
                let (h, w) = self.stack.dims();
                euclidean_edt(scribbles, h, w)?
            }
            method => geodesic_raster(&*self.source(method)?, scribbles, &request.params())?,
        };
        let (min_raw, max_raw) = raw.min_max();
        let normalized = normalize_map(&raw);
        Ok(CachedMap {
            raw,
            normalized,
            min_raw,
            max_raw,
            compute_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn touch(&self, now: Instant) {
        *self.last_touched.lock() = now;
    }

    fn idle_for(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_touched.lock())
    }
}

struct Shared {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    computations: AtomicUsize,
}

/// In-memory session store shared by all handlers.
#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            shared: Arc::new(Shared {
                config,
                sessions: Mutex::new(HashMap::new()),
                computations: AtomicUsize::new(0),
            }),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.shared.config
    }

    /// Registers a session under a fresh random id.
    pub fn create_session(
        &self,
        stack: ChannelStack,
        gt: Option<BinaryMask>,
    ) -> Result<String, Error> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.insert_session(id.clone(), stack, gt)?;
        Ok(id)
    }

    /// Registers a session under a caller-chosen id, replacing any previous one.
    pub fn insert_session(
        &self,
        id: String,
        stack: ChannelStack,
        gt: Option<BinaryMask>,
    ) -> Result<(), Error> {
        if let Some(gt) = &gt {
            if gt.dims() != stack.dims() {
                return Err(Error::DimensionMismatch {
                    expected: stack.dims(),
                    actual: gt.dims(),
                });
            }
        }
        self.shared
            .sessions
            .lock()
            .insert(id, Arc::new(Session::new(stack, gt)));
        Ok(())
    }

    pub fn session_count(&self) -> usize {
        self.shared.sessions.lock().len()
    }

    /// Number of solver runs so far; coalesced requests count once.
    pub fn computations(&self) -> usize {
        self.shared.computations.load(Ordering::Relaxed)
    }

    pub(crate) fn record_computation(&self) {
        self.shared.computations.fetch_add(1, Ordering::Relaxed);
    }

    /// Live session by id, refreshing its idle timer. Expired sessions are removed.
    pub(crate) fn session(&self, id: &str) -> Option<Arc<Session>> {
        let now = Instant::now();
        let mut sessions = self.shared.sessions.lock();
        let session = sessions.get(id)?.clone();
        if session.idle_for(now) > self.shared.config.session_ttl {
            sessions.remove(id);
            return None;
        }
        session.touch(now);
        Some(session)
    }

    /// Removes every session idle for longer than the TTL; returns how many.
    pub fn drop_expired(&self) -> usize {
        let now = Instant::now();
        let ttl = self.shared.config.session_ttl;
        let mut sessions = self.shared.sessions.lock();
        let before = sessions.len();
        sessions.retain(|_, s| s.idle_for(now) <= ttl);
        before - sessions.len()
    }
}
