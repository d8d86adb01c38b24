//! Embedded service container: publishes running deployments under named
//! service URLs and moves frames between subscribers and the chain.
//!
//! Every exposed service owns one worker thread that runs queued frames
//! through its deployment in arrival order. Pushes to one subscription are
//! serialized by the subscription lock and enter the queue in sequence order,
//! so each subscription sees its results in input order.

mod http;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use tokio::runtime::Runtime;
use tokio::sync::{oneshot, Notify};
use tokio::time::Instant;

use crate::deployer::{Deployment, DeploymentState, HostError, ServiceHost};
use crate::model::{is_service_name, ElementType, Elements};
use crate::wire::{
    decode_payload, DataFrame, ServiceDescriptor, ServiceUrl, StatusResponse, SubscriptionState,
};

/// Upper bound on a single long-poll.
pub const MAX_PULL_WAIT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("port already in use: {0}")]
    PortInUse(String),
    #[error("cannot bind: {0}")]
    BindFailure(String),
    #[error("no service {0:?}")]
    NotFound(String),
    #[error("invalid service name {0:?}")]
    InvalidName(String),
    #[error("service {0:?} is already exposed")]
    NameCollision(String),
    #[error("deployment for {0:?} is not running")]
    NotRunning(String),
    #[error("unknown subscription {0:?}")]
    UnknownSubscription(String),
    #[error("expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("input side of the subscription is closed")]
    InputClosed,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("processing failed: {0}")]
    ProcessingFailed(String),
}

impl ServiceError {
    /// Error code carried in the JSON error body.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::PortInUse(_) => "PortInUse",
            ServiceError::BindFailure(_) => "BindFailure",
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::InvalidName(_) => "InvalidName",
            ServiceError::NameCollision(_) => "NameCollision",
            ServiceError::NotRunning(_) => "NotRunning",
            ServiceError::UnknownSubscription(_) => "UnknownSubscription",
            ServiceError::SequenceGap { .. } => "SequenceGap",
            ServiceError::InputClosed => "InputClosed",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::ProcessingFailed(_) => "ProcessingFailed",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            ServiceError::NotFound(_) | ServiceError::UnknownSubscription(_) => 404,
            ServiceError::SequenceGap { .. } | ServiceError::InvalidName(_) | ServiceError::BadRequest(_) => 400,
            ServiceError::NameCollision(_) | ServiceError::InputClosed | ServiceError::NotRunning(_) => 409,
            ServiceError::PortInUse(_) | ServiceError::BindFailure(_) | ServiceError::ProcessingFailed(_) => 500,
        }
    }
}

type Result<T> = std::result::Result<T, ServiceError>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

struct Job {
    sub: Arc<Subscription>,
    seq: u64,
    /// `None` marks end of stream.
    input: Option<Elements>,
}

struct Service {
    descriptor: ServiceDescriptor,
    queue: Mutex<Option<mpsc::Sender<Job>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
    subscribers: Mutex<Vec<Arc<Subscription>>>,
}

#[derive(Default)]
struct SubState {
    next_input_seq: u64,
    next_output_seq: u64,
    input_closed: bool,
    closed: bool,
    ready: VecDeque<DataFrame>,
    failure: Option<String>,
}

struct Subscription {
    id: String,
    service: String,
    input_element: ElementType,
    state: Mutex<SubState>,
    notify: Notify,
}

impl Subscription {
    fn deliver(&self, frame: DataFrame) {
        lock(&self.state).ready.push_back(frame);
        self.notify.notify_waiters();
    }

    fn fail(&self, detail: String) {
        lock(&self.state).failure = Some(detail);
        self.notify.notify_waiters();
    }

    /// Ready frames, or `Some(empty)` once closed, or `None` to keep waiting.
    fn take_ready(&self) -> Result<Option<Vec<DataFrame>>> {
        let mut st = lock(&self.state);
        if let Some(detail) = &st.failure {
            return Err(ServiceError::ProcessingFailed(detail.clone()));
        }
        if !st.ready.is_empty() {
            let frames: Vec<DataFrame> = st.ready.drain(..).collect();
            let last = frames.last().expect("non-empty");
            st.next_output_seq = last.seq + 1;
            if last.eos {
                st.closed = true;
            }
            return Ok(Some(frames));
        }
        Ok(st.closed.then(Vec::new))
    }
}

/// State shared between the container handle, the HTTP handlers and the
/// service workers.
pub(crate) struct Shared {
    host: String,
    port: u16,
    services: RwLock<BTreeMap<String, Arc<Service>>>,
    subscriptions: Mutex<HashMap<String, Arc<Subscription>>>,
}

impl Shared {
    fn service(&self, name: &str) -> Result<Arc<Service>> {
        self.services
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(name)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(name.to_string()))
    }

    fn subscription(&self, name: &str, sub_id: &str) -> Result<Arc<Subscription>> {
        lock(&self.subscriptions)
            .get(sub_id)
            .filter(|s| s.service == name)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSubscription(sub_id.to_string()))
    }

    fn url(&self, name: &str) -> ServiceUrl {
        ServiceUrl::new(self.host.clone(), self.port, name)
    }

    pub(crate) fn service_names(&self) -> Vec<String> {
        self.services
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    fn expose(&self, deployment: Arc<Deployment>, name: &str) -> Result<ServiceUrl> {
        if !is_service_name(name) {
            return Err(ServiceError::InvalidName(name.to_string()));
        }
        if deployment.state() != DeploymentState::Running {
            return Err(ServiceError::NotRunning(name.to_string()));
        }
        let mut services = self.services.write().unwrap_or_else(|e| e.into_inner());
        if services.contains_key(name) {
            return Err(ServiceError::NameCollision(name.to_string()));
        }
        let descriptor = ServiceDescriptor::for_module(name, deployment.module());
        let (tx, rx) = mpsc::channel::<Job>();
        let worker = std::thread::Builder::new()
            .name(format!("service-{name}"))
            .spawn(move || run_worker(deployment, rx))
            .map_err(|e| ServiceError::ProcessingFailed(e.to_string()))?;
        services.insert(
            name.to_string(),
            Arc::new(Service {
                descriptor,
                queue: Mutex::new(Some(tx)),
                worker: Mutex::new(Some(worker)),
                subscribers: Mutex::new(Vec::new()),
            }),
        );
        Ok(self.url(name))
    }

    /// Removes the service, closes the input side of its subscriptions and
    /// waits for queued frames to be processed. Results already produced stay
    /// pullable.
    fn retire(&self, name: &str) -> bool {
        let removed = self
            .services
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(name);
        let Some(service) = removed else {
            return false;
        };
        for sub in lock(&service.subscribers).iter() {
            let mut st = lock(&sub.state);
            if !st.input_closed {
                st.input_closed = true;
                if let Some(q) = lock(&service.queue).as_ref() {
                    let _ = q.send(Job {
                        sub: sub.clone(),
                        seq: st.next_input_seq,
                        input: None,
                    });
                }
            }
        }
        lock(&service.queue).take();
        if let Some(worker) = lock(&service.worker).take() {
            let _ = worker.join();
        }
        true
    }

    fn retire_all(&self) {
        for name in self.service_names() {
            self.retire(&name);
        }
    }

    fn descriptor(&self, name: &str) -> Result<ServiceDescriptor> {
        Ok(self.service(name)?.descriptor.clone())
    }

    fn subscribe(&self, name: &str) -> Result<String> {
        let service = self.service(name)?;
        let id = hex::encode(rand::random::<[u8; 16]>());
        let sub = Arc::new(Subscription {
            id: id.clone(),
            service: name.to_string(),
            input_element: service.descriptor.input_element,
            state: Mutex::new(SubState::default()),
            notify: Notify::new(),
        });
        let mut subscribers = lock(&service.subscribers);
        // A concurrent retire removes the service before walking its subscribers.
        if !self.services.read().unwrap_or_else(|e| e.into_inner()).contains_key(name) {
            return Err(ServiceError::NotFound(name.to_string()));
        }
        subscribers.push(sub.clone());
        lock(&self.subscriptions).insert(id.clone(), sub);
        Ok(id)
    }

    fn push(&self, name: &str, frame: &DataFrame) -> Result<()> {
        let sub = self.subscription(name, &frame.sub_id)?;
        let mut st = lock(&sub.state);
        if st.closed || st.input_closed {
            return Err(ServiceError::InputClosed);
        }
        if frame.seq != st.next_input_seq {
            return Err(ServiceError::SequenceGap {
                expected: st.next_input_seq,
                got: frame.seq,
            });
        }
        let input = if frame.eos {
            if !frame.payload.is_empty() {
                return Err(ServiceError::BadRequest("end-of-stream frame must have an empty payload".into()));
            }
            None
        } else {
            Some(decode_payload(sub.input_element, &frame.payload).map_err(|e| ServiceError::BadRequest(e.to_string()))?)
        };
        let service = self.service(name).map_err(|_| ServiceError::InputClosed)?;
        let queue = lock(&service.queue);
        let sent = queue.as_ref().is_some_and(|q| {
            q.send(Job {
                sub: sub.clone(),
                seq: frame.seq,
                input,
            })
            .is_ok()
        });
        if !sent {
            return Err(ServiceError::InputClosed);
        }
        st.next_input_seq += 1;
        if frame.eos {
            st.input_closed = true;
        }
        Ok(())
    }

    async fn pull(&self, name: &str, sub_id: &str, max_wait: Duration) -> Result<Vec<DataFrame>> {
        let sub = self.subscription(name, sub_id)?;
        let deadline = Instant::now() + max_wait.min(MAX_PULL_WAIT);
        loop {
            let notified = sub.notify.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            if let Some(frames) = sub.take_ready()? {
                return Ok(frames);
            }
            if tokio::time::timeout_at(deadline, notified).await.is_err() {
                return Ok(Vec::new());
            }
        }
    }

    fn status(&self, name: &str, sub_id: &str) -> Result<StatusResponse> {
        let sub = self.subscription(name, sub_id)?;
        let st = lock(&sub.state);
        Ok(StatusResponse {
            state: if st.closed {
                SubscriptionState::Closed
            } else {
                SubscriptionState::Open
            },
            next_input_seq: st.next_input_seq,
            next_output_seq: st.next_output_seq,
        })
    }

    fn unsubscribe(&self, name: &str, sub_id: &str) -> Result<()> {
        let sub = self.subscription(name, sub_id)?;
        lock(&self.subscriptions).remove(sub_id);
        if let Ok(service) = self.service(name) {
            lock(&service.subscribers).retain(|s| s.id != sub.id);
        }
        {
            let mut st = lock(&sub.state);
            st.closed = true;
            st.input_closed = true;
        }
        sub.notify.notify_waiters();
        Ok(())
    }
}

fn run_worker(deployment: Arc<Deployment>, jobs: mpsc::Receiver<Job>) {
    for job in jobs {
        match job.input {
            Some(input) => match deployment.process_frame(&input) {
                Ok((output, _)) => job.sub.deliver(DataFrame::data(&job.sub.id, job.seq, &output)),
                Err(e) => job.sub.fail(e.to_string()),
            },
            None => job.sub.deliver(DataFrame::end_of_stream(&job.sub.id, job.seq)),
        }
    }
}

impl ServiceHost for Shared {
    fn expose(&self, name: &str, deployment: Arc<Deployment>) -> std::result::Result<String, HostError> {
        Shared::expose(self, deployment, name)
            .map(|u| u.to_string())
            .map_err(|e| Box::new(e) as HostError)
    }

    fn unexpose(&self, name: &str) {
        self.retire(name);
    }
}

/// A running container. Dropping it withdraws every service and stops the
/// HTTP server.
pub struct Container {
    shared: Arc<Shared>,
    addr: SocketAddr,
    runtime: Option<Runtime>,
    shutdown: Option<oneshot::Sender<()>>,
}

impl std::fmt::Debug for Container {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Container").field("addr", &self.addr).finish()
    }
}

impl Container {
    /// Binds `bind_host:port` and starts serving. Port 0 picks a free port.
    pub fn start(bind_host: &str, port: u16) -> Result<Container> {
        let listener = std::net::TcpListener::bind((bind_host, port)).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AddrInUse {
                ServiceError::PortInUse(format!("{bind_host}:{port}"))
            } else {
                ServiceError::BindFailure(format!("{bind_host}:{port}: {e}"))
            }
        })?;
        let addr = listener
            .local_addr()
            .map_err(|e| ServiceError::BindFailure(e.to_string()))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| ServiceError::BindFailure(e.to_string()))?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .thread_name("grid-container")
            .enable_all()
            .build()
            .map_err(|e| ServiceError::BindFailure(e.to_string()))?;
        let listener = {
            let _guard = runtime.enter();
            tokio::net::TcpListener::from_std(listener).map_err(|e| ServiceError::BindFailure(e.to_string()))?
        };

        let shared = Arc::new(Shared {
            host: bind_host.to_string(),
            port: addr.port(),
            services: RwLock::new(BTreeMap::new()),
            subscriptions: Mutex::new(HashMap::new()),
        });
        let app = http::router(shared.clone());
        let (tx, rx) = oneshot::channel::<()>();
        runtime.spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Container {
            shared,
            addr,
            runtime: Some(runtime),
            shutdown: Some(tx),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// `http://{host}:{port}`
    pub fn base_url(&self) -> String {
        format!("http://{}:{}", self.shared.host, self.shared.port)
    }

    /// Handle for [`Deployment::start`].
    pub fn host(&self) -> Arc<dyn ServiceHost> {
        self.shared.clone()
    }

    pub fn expose(&self, deployment: &Arc<Deployment>, name: &str) -> Result<ServiceUrl> {
        self.shared.expose(deployment.clone(), name)
    }

    /// Withdraws a service after draining its queued frames.
    pub fn unexpose(&self, name: &str) -> bool {
        self.shared.retire(name)
    }

    pub fn service_names(&self) -> Vec<String> {
        self.shared.service_names()
    }

    pub fn descriptor(&self, name: &str) -> Result<ServiceDescriptor> {
        self.shared.descriptor(name)
    }

    pub fn subscribe(&self, name: &str) -> Result<String> {
        self.shared.subscribe(name)
    }

    pub fn push(&self, name: &str, frame: &DataFrame) -> Result<()> {
        self.shared.push(name, frame)
    }

    /// Blocking long-poll. Must not be called from inside an async runtime.
    pub fn pull(&self, name: &str, sub_id: &str, max_wait: Duration) -> Result<Vec<DataFrame>> {
        let runtime = self.runtime.as_ref().expect("running container");
        runtime.block_on(self.shared.pull(name, sub_id, max_wait))
    }

    pub fn status(&self, name: &str, sub_id: &str) -> Result<StatusResponse> {
        self.shared.status(name, sub_id)
    }

    pub fn unsubscribe(&self, name: &str, sub_id: &str) -> Result<()> {
        self.shared.unsubscribe(name, sub_id)
    }
}

impl Drop for Container {
    fn drop(&mut self) {
        self.shared.retire_all();
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_timeout(Duration::from_secs(1));
        }
    }
}
