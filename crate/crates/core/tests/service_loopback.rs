mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::http::*;
use common::*;
use serde_json::json;

use reconfgrid::client::{self, ClientError, ClientSession};
use reconfgrid::deployer::{deploy, plan, DeployError, Deployment, MatchPolicy};
use reconfgrid::ham::{BackendDescriptor, Registry};
use reconfgrid::library::Library;
use reconfgrid::model::{validate_module, ElementType, Elements};
use reconfgrid::service::{Container, ServiceError};
use reconfgrid::wire::{encode_payload, ServiceDescriptor, ServiceUrl};

fn full_registry() -> Registry {
    let mut g = rng(99);
    let r = registry(8, (0..8).map(|_| random_device(&mut g)).collect());
    r.register_ham(&BackendDescriptor::grid()).unwrap();
    r
}

fn deployed(registry: &Registry, chain: &Chain) -> Arc<Deployment> {
    let module = Arc::new(validate_module(&chain.spec, Library::builtin()).unwrap());
    let p = plan(module, &registry.snapshot(), &MatchPolicy::default()).unwrap();
    Arc::new(deploy(p, registry).unwrap())
}

/// A container serving one random chain under `name`.
fn serve(name: &str, seed: u64, len: usize) -> (Container, Arc<Deployment>, Chain, String) {
    let r = full_registry();
    let chain = random_chain(&mut rng(seed), "m", len, Some(name), true);
    let d = deployed(&r, &chain);
    let c = Container::start("127.0.0.1", 0).unwrap();
    let urls = d.start(Some(c.host())).unwrap();
    assert_eq!(urls.len(), 1);
    (c, d, chain, urls[0].clone())
}

#[test]
fn frames_come_back_in_order_then_end_of_stream() {
    let (_c, _d, chain, url) = serve("Fifo", 1, 4);
    let mut g = rng(2);
    let mut session = ClientSession::connect(&url).unwrap();
    let inputs: Vec<Elements> = (0..12).map(|i| random_input(&mut g, chain.element, i * 37)).collect();
    for x in &inputs {
        session.send(x).unwrap();
    }
    session.finish().unwrap();
    let outputs = session.receive_all(Duration::from_secs(30)).unwrap();
    assert_eq!(outputs.len(), inputs.len());
    for (x, y) in inputs.iter().zip(&outputs) {
        assert_eq!(bits(y), bits(&chain.oracle(x)));
    }
}

#[test]
fn client_output_equals_process_frame() {
    let (_c, d, chain, url) = serve("Loop", 3, 3);
    let mut g = rng(4);
    for _ in 0..5 {
        let x = random_input(&mut g, chain.element, 500);
        let remote = client::process(&url, &x).unwrap();
        let (local, _) = d.process_frame(&x).unwrap();
        assert_eq!(bits(&remote), bits(&local));
    }
}

#[test]
fn interleaved_subscriptions_stay_isolated() {
    let (_c, _d, chain, url) = serve("Iso", 5, 2);
    let mut g = rng(6);
    let mut a = ClientSession::connect(&url).unwrap();
    let mut b = ClientSession::connect(&url).unwrap();
    assert_ne!(a.sub_id(), b.sub_id());
    let xa: Vec<_> = (0..8).map(|_| random_input(&mut g, chain.element, 64)).collect();
    let xb: Vec<_> = (0..8).map(|_| random_input(&mut g, chain.element, 65)).collect();
    for (p, q) in xa.iter().zip(&xb) {
        a.send(p).unwrap();
        b.send(q).unwrap();
    }
    a.finish().unwrap();
    b.finish().unwrap();
    let ya = a.receive_all(Duration::from_secs(30)).unwrap();
    let yb = b.receive_all(Duration::from_secs(30)).unwrap();
    for (x, y) in xa.iter().zip(&ya).chain(xb.iter().zip(&yb)) {
        assert_eq!(bits(y), bits(&chain.oracle(x)));
    }
}

#[test]
fn push_and_pull_run_concurrently() {
    let (_c, _d, chain, url) = serve("Conc", 7, 3);
    let mut g = rng(8);
    let inputs: Vec<_> = (0..30).map(|_| random_input(&mut g, chain.element, 100)).collect();
    let session = ClientSession::connect(&url).unwrap();
    let sub = session.sub_id().to_string();
    let puller = {
        let url = url.clone();
        let sub = sub.clone();
        let element = chain.element;
        std::thread::spawn(move || {
            let mut got = Vec::new();
            loop {
                let (_, body) = get(&format!("{url}/pull?subId={sub}&maxWaitMillis=2000"));
                for f in body["frames"].as_array().unwrap() {
                    if f["eos"].as_bool().unwrap() {
                        return got;
                    }
                    let frame: reconfgrid::wire::DataFrame = serde_json::from_value(f.clone()).unwrap();
                    assert_eq!(frame.seq, got.len() as u64);
                    got.push(frame.elements(element).unwrap());
                }
            }
        })
    };
    for (seq, x) in inputs.iter().enumerate() {
        let (status, body) = push_json(&url, &sub, seq as u64, &encode_payload(x), false);
        assert_eq!(status, 200, "{body}");
    }
    push_json(&url, &sub, inputs.len() as u64, "", true);
    let got = puller.join().unwrap();
    assert_eq!(got.len(), inputs.len());
    for (x, y) in inputs.iter().zip(&got) {
        assert_eq!(bits(y), bits(&chain.oracle(x)));
    }
}

#[test]
fn sequence_gap_is_400() {
    let (_c, _d, chain, url) = serve("Gap", 9, 1);
    let sub = subscribe(&url);
    let x = encode_payload(&random_input(&mut rng(1), chain.element, 4));
    assert_eq!(push_json(&url, &sub, 0, &x, false).0, 200);
    let (status, body) = push_json(&url, &sub, 2, &x, false);
    assert_eq!(status, 400);
    assert_eq!(body["error"], "SequenceGap");
    assert!(body["detail"].as_str().unwrap().contains("expected seq 1, got 2"));
}

#[test]
fn push_after_end_of_stream_is_409() {
    let (_c, _d, chain, url) = serve("Closed", 10, 1);
    let sub = subscribe(&url);
    assert_eq!(push_json(&url, &sub, 0, "", true).0, 200);
    let x = encode_payload(&random_input(&mut rng(1), chain.element, 4));
    let (status, body) = push_json(&url, &sub, 1, &x, false);
    assert_eq!((status, body["error"].as_str()), (409, Some("InputClosed")));
}

#[test]
fn unknown_service_and_subscription_are_404() {
    let (c, _d, _chain, url) = serve("Known", 11, 1);
    let missing = format!("{}/ogsa/services/proteusgrid/ProteusGridService/Nope", c.base_url());
    let (status, body) = get(&missing);
    assert_eq!((status, body["error"].as_str()), (404, Some("NotFound")));
    assert_eq!(post(&format!("{missing}/subscribe"), "").0, 404);
    assert!(matches!(ClientSession::connect(&missing), Err(ClientError::NotFound(_))));

    let (status, body) = get(&format!("{url}/status?subId=deadbeef"));
    assert_eq!((status, body["error"].as_str()), (404, Some("UnknownSubscription")));
    assert_eq!(get(&format!("{}/elsewhere", c.base_url())).0, 404);
}

#[test]
fn malformed_push_is_400() {
    let (_c, _d, _chain, url) = serve("Bad", 12, 1);
    let sub = subscribe(&url);
    assert_eq!(post(&format!("{url}/push"), "{not json").0, 400);
    let (status, body) = push_json(&url, &sub, 0, "***", false);
    assert_eq!((status, body["error"].as_str()), (400, Some("BadRequest")));
}

#[test]
fn name_collision_is_409_and_rolls_back() {
    let r = full_registry();
    let c = Container::start("127.0.0.1", 0).unwrap();
    let a = random_chain(&mut rng(1), "a", 1, Some("Twice"), false);
    let b = random_chain(&mut rng(2), "b", 1, Some("Twice"), false);
    let da = deployed(&r, &a);
    let db = deployed(&r, &b);
    da.start(Some(c.host())).unwrap();
    let err = db.start(Some(c.host())).unwrap_err();
    let DeployError::Expose { source, .. } = &err else {
        panic!("{err:?}");
    };
    assert!(source.to_string().contains("already exposed"), "{source}");
    assert_eq!(db.state(), reconfgrid::deployer::DeploymentState::Planned);
    let direct = c.expose(&da, "Twice").unwrap_err();
    assert_eq!((direct.code(), direct.http_status()), ("NameCollision", 409));
    assert_eq!(ServiceError::InvalidName("x".into()).http_status(), 400);
    assert!(matches!(c.expose(&da, "bad name!"), Err(ServiceError::InvalidName(_))));
    assert!(matches!(c.expose(&db, "Other"), Err(ServiceError::NotRunning(_))));
}

#[test]
fn occupied_port_is_port_in_use() {
    let c = Container::start("127.0.0.1", 0).unwrap();
    let err = Container::start("127.0.0.1", c.port()).unwrap_err();
    assert!(matches!(err, ServiceError::PortInUse(_)), "{err:?}");
}

#[test]
fn long_poll_waits_then_returns_empty() {
    let (_c, _d, _chain, url) = serve("Wait", 13, 1);
    let sub = subscribe(&url);
    let t = Instant::now();
    let (status, body) = get(&format!("{url}/pull?subId={sub}&maxWaitMillis=300"));
    assert_eq!(status, 200);
    assert_eq!(body["frames"], json!([]));
    assert!(t.elapsed() >= Duration::from_millis(280), "{:?}", t.elapsed());
    let t = Instant::now();
    get(&format!("{url}/pull?subId={sub}"));
    assert!(t.elapsed() < Duration::from_millis(250));
}

#[test]
fn status_tracks_sequences_and_unsubscribe_closes() {
    let (_c, _d, chain, url) = serve("Stat", 14, 1);
    let mut s = ClientSession::connect(&url).unwrap();
    for _ in 0..3 {
        s.send(&random_input(&mut rng(1), chain.element, 8)).unwrap();
    }
    s.finish().unwrap();
    s.receive_all(Duration::from_secs(10)).unwrap();
    let st = s.status().unwrap();
    assert_eq!((st.next_input_seq, st.next_output_seq), (4, 4));
    let sub = s.sub_id().to_string();
    s.unsubscribe().unwrap();
    let (status, body) = get(&format!("{url}/status?subId={sub}"));
    assert_eq!((status, body["error"].as_str()), (404, Some("UnknownSubscription")));
    let (status, _) = post(&format!("{url}/unsubscribe"), &json!({"subId": sub}).to_string());
    assert_eq!(status, 404);
}

#[test]
fn descriptor_round_trips_and_index_lists_services() {
    let (c, d, _chain, url) = serve("Desc", 15, 2);
    let (status, body) = get(&url);
    assert_eq!(status, 200);
    let served: ServiceDescriptor = serde_json::from_value(body).unwrap();
    assert_eq!(served, ServiceDescriptor::for_module("Desc", d.module()));
    assert_eq!(client::list_services(&c.base_url()).unwrap(), ["Desc"]);
    let parsed: ServiceUrl = url.parse().unwrap();
    assert_eq!((parsed.port, parsed.service_name.as_str()), (c.port(), "Desc"));
}

#[test]
fn client_checks_types_before_sending() {
    let (_c, _d, chain, url) = serve("Typed", 16, 1);
    let mut s = ClientSession::connect(&url).unwrap();
    let wrong = match chain.element {
        ElementType::I32 => Elements::F64(vec![1.0]),
        _ => Elements::I32(vec![1]),
    };
    assert!(matches!(s.send(&wrong), Err(ClientError::TypeMismatch { .. })));
    assert_eq!(s.next_input_seq(), 0);
    assert_eq!(s.status().unwrap().next_input_seq, 0);
}

#[test]
fn stopping_a_deployment_ends_open_streams() {
    let (_c, d, chain, url) = serve("Drain", 17, 2);
    let mut s = ClientSession::connect(&url).unwrap();
    let x = random_input(&mut rng(3), chain.element, 256);
    s.send(&x).unwrap();
    d.stop().unwrap();
    let out = s.receive_all(Duration::from_secs(10)).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(bits(&out[0]), bits(&chain.oracle(&x)));
    assert!(matches!(ClientSession::connect(&url), Err(ClientError::NotFound(_))));
}

#[test]
fn unreachable_host_is_reported() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let url = format!("http://127.0.0.1:{port}/ogsa/services/proteusgrid/ProteusGridService/X");
    assert!(matches!(ClientSession::connect(&url), Err(ClientError::Unreachable(_))));
    assert!(matches!(ClientSession::connect("ftp://nope"), Err(ClientError::MalformedUrl(_))));
}
