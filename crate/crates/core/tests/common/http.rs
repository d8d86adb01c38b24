//! Raw HTTP access to a container, bypassing the client SDK.

use serde_json::{json, Value};

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn post(url: &str, body: &str) -> (u16, Value) {
    let mut resp = agent()
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap_or(Value::Null))
}

pub fn get(url: &str) -> (u16, Value) {
    let mut resp = agent().get(url).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap_or(Value::Null))
}

pub fn subscribe(url: &str) -> String {
    let (status, body) = post(&format!("{url}/subscribe"), "");
    assert_eq!(status, 200, "{body}");
    body["subId"].as_str().unwrap().to_string()
}

pub fn push_json(url: &str, sub: &str, seq: u64, payload: &str, eos: bool) -> (u16, Value) {
    let body = json!({"subId": sub, "seq": seq, "payload": payload, "eos": eos}).to_string();
    post(&format!("{url}/push"), &body)
}
