mod common;

use adma::api::ROUTES;
use axum::http::StatusCode;
use common::{golden, golden_world, Harness, ADMIN, SHP};
use serde_json::{json, Value};

#[test]
fn metadata_and_listing_match_golden_files_across_restarts() {
    let dir = tempfile::tempdir().unwrap();
    let (meta, list) = {
        let h = Harness::at(dir.path());
        let key = golden_world(&h);
        let meta = h.call("GET", &format!("/api_meta_data?path={SHP}&key={key}"), None, b"");
        let list = h.call("GET", &format!("/api_list_sub_items?path=/username/ag_data/green&key={key}"), None, b"");
        assert_eq!(meta.0, StatusCode::OK);
        assert_eq!(list.0, StatusCode::OK);
        golden("api_meta_data.json", &meta.1);
        golden("api_list_sub_items.json", &list.1);
        (meta.1, list.1)
    };
    let key = {
        let h = Harness::reopen(dir.path(), 1);
        h.svc.with_catalog(|c| c.user("username").unwrap().api_key.clone())
    };
    for generation in 1..=2 {
        let h = Harness::reopen(dir.path(), generation);
        let m = h.call("GET", &format!("/api_meta_data?path={SHP}&key={key}"), None, b"");
        let l = h.call("GET", &format!("/api_list_sub_items?path=/username/ag_data/green&key={key}"), None, b"");
        assert_eq!(m.1, meta, "restart {generation}");
        assert_eq!(l.1, list, "restart {generation}");
    }
}

#[test]
fn every_endpoint_rejects_missing_and_bad_keys_without_state_change() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::at(dir.path());
    let key = golden_world(&h);
    let before = h.svc.with_catalog(|c| (c.docs().cloned().collect::<Vec<_>>(), c.provenance().log().len(), c.audit().len()));
    let mut seen = std::collections::BTreeSet::new();
    for r in ROUTES {
        if !seen.insert((r.method, r.path)) {
            continue;
        }
        let uri = format!("{}?path={SHP}&src={SHP}&dst=/username/ag_data/x&privilege=public&username=eve&action=create&run_id=run-000001", r.path);
        for bad in [None, Some("0".repeat(64)), Some(key.to_uppercase())] {
            let (status, body) = h.call(r.method, &uri, bad.as_deref(), b"{}");
            assert_eq!(status, StatusCode::UNAUTHORIZED, "{} {}", r.method, r.path);
            let v: Value = serde_json::from_slice(&body).unwrap();
            assert_eq!(v["error"]["code"], "unauthorized");
            assert_eq!(v.as_object().unwrap().len(), 1);
        }
    }
    // A user key is not the admin key.
    assert_eq!(h.post("/api_create_user?username=eve", &key, b"").0, StatusCode::UNAUTHORIZED);
    let after = h.svc.with_catalog(|c| (c.docs().cloned().collect::<Vec<_>>(), c.provenance().log().len(), c.audit().len()));
    assert_eq!(before, after);
}

#[test]
fn the_key_may_travel_in_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::at(dir.path());
    let key = h.user("alice");
    let req = axum::http::Request::builder()
        .uri("/api_list_sub_items?path=/alice/ag_data")
        .header("x-api-key", &key)
        .body(axum::body::Body::empty())
        .unwrap();
    let status = h.rt.block_on(async {
        use tower::ServiceExt;
        h.app.clone().oneshot(req).await.unwrap().status()
    });
    assert_eq!(status, StatusCode::OK);
}

#[test]
fn errors_map_to_envelopes_and_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::at(dir.path());
    let alice = h.user("alice");
    let bob = h.user("bob");
    h.upload(&alice, "/alice/ag_data/a.csv", "data", b"1,2");
    let cases: Vec<(&str, String, &str, StatusCode, &str)> = vec![
        ("GET", "/api_meta_data?path=/alice/ag_data/a.csv".into(), bob.as_str(), StatusCode::NOT_FOUND, "not_found"),
        ("GET", "/api_meta_data?path=/alice/ag_data/zzz".into(), alice.as_str(), StatusCode::NOT_FOUND, "not_found"),
        ("GET", "/api_meta_data?path=not-absolute".into(), alice.as_str(), StatusCode::BAD_REQUEST, "bad_request"),
        ("GET", "/api_meta_data".into(), alice.as_str(), StatusCode::BAD_REQUEST, "bad_request"),
        ("POST", "/api_upload?path=/alice/ag_data/a.csv".into(), alice.as_str(), StatusCode::CONFLICT, "conflict"),
        ("POST", "/api_upload?path=/alice/ag_data/b.csv".into(), bob.as_str(), StatusCode::UNAUTHORIZED, "unauthorized"),
        ("POST", "/api_mkdir?path=/alice/ag_data/no/such".into(), alice.as_str(), StatusCode::NOT_FOUND, "not_found"),
        ("POST", "/api_create_user?username=alice".into(), ADMIN, StatusCode::CONFLICT, "conflict"),
        ("POST", "/api_create_user?username=Bad%20Name".into(), ADMIN, StatusCode::BAD_REQUEST, "bad_request"),
        ("GET", "/api_search?q=x&k=abc".into(), alice.as_str(), StatusCode::BAD_REQUEST, "bad_request"),
        ("GET", "/api_search?q=x&from=10&to=5".into(), alice.as_str(), StatusCode::BAD_REQUEST, "bad_request"),
        ("POST", "/api_move?src=/alice/ag_data&dst=/alice/ag_data/x".into(), alice.as_str(), StatusCode::CONFLICT, "conflict"),
        ("GET", "/api_nope".into(), alice.as_str(), StatusCode::NOT_FOUND, "not_found"),
        ("POST", "/api_argspec?path=/alice/ag_data/a.csv".into(), alice.as_str(), StatusCode::BAD_REQUEST, "bad_request"),
        ("GET", "/api_run_status?run_id=run-000009".into(), alice.as_str(), StatusCode::NOT_FOUND, "not_found"),
    ];
    for (method, uri, key, status, code) in cases {
        let (s, body) = h.call(method, &uri, Some(key), b"[]");
        let v: Value = serde_json::from_slice(&body).unwrap();
        assert_eq!((s, v["error"]["code"].as_str().unwrap_or("")), (status, code), "{method} {uri}: {v}");
        assert!(v["error"]["message"].is_string());
    }
    let (s, _) = h.call("DELETE", "/api_meta_data", Some(&alice), b"");
    assert_eq!(s, StatusCode::METHOD_NOT_ALLOWED);
}

#[test]
fn metadata_update_and_filtered_search() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::at(dir.path());
    let key = h.user("alice");
    let before = h.upload(&key, "/alice/ag_data/yield.csv", "data", b"1,2,3");
    h.upload(&key, "/alice/ag_data/notes.txt", "data", b"soil");
    h.upload(&key, "/alice/ag_data/fit.py", "tool", b"print(1)");
    let after = h.ok_post(
        "/api_update_meta?path=/alice/ag_data/yield.csv",
        &key,
        br#"{"labels":["maize","2021"],"description":"maize yield"}"#,
    );
    assert_eq!(after["content_hash"], before["content_hash"]);
    assert_eq!(after["size_bytes"], before["size_bytes"]);
    let (s, v) = h.post("/api_update_meta?path=/alice/ag_data/yield.csv", &key, br#"{"mode":"tool"}"#);
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));

    let hits = h.ok_get("/api_search?q=maize&mode=data&k=5", &key);
    let hits = hits.as_array().unwrap();
    assert!(!hits.is_empty() && hits.len() <= 5);
    assert!(hits.iter().all(|x| x["mode"] == "data"));
    assert_eq!(hits[0]["path"], "/alice/ag_data/yield.csv");
    let sims: Vec<f64> = hits.iter().map(|x| x["similarity"].as_f64().unwrap()).collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]));

    let labelled = h.ok_get("/api_search?q=anything&labels=maize", &key);
    assert_eq!(labelled.as_array().unwrap().len(), 1);
    let with_xy = h.ok_get("/api_search?q=maize&k=3&projection=true", &key);
    assert_eq!(with_xy["hits"].as_array().unwrap().len(), 3);
    assert_eq!(with_xy["projection"].as_array().unwrap().len(), 3);
}

#[test]
fn visibility_is_recursive_and_public_data_is_virtual() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::at(dir.path());
    let alice = h.user("alice");
    let bob = h.user("bob");
    assert_eq!(h.ok_get("/api_list_sub_items?path=/alice/ag_data/public_data", &alice), json!([]));
    h.mkdir(&bob, "/bob/ag_data/f");
    h.mkdir(&bob, "/bob/ag_data/f/g");
    h.upload(&bob, "/bob/ag_data/f/g/x.csv", "data", b"x");
    let affected = h.ok_post("/api_visibility?path=/bob/ag_data/f&privilege=public", &bob, b"");
    assert_eq!(affected, json!(["/bob/ag_data/f", "/bob/ag_data/f/g", "/bob/ag_data/f/g/x.csv"]));

    let root = h.ok_get("/api_list_sub_items?path=/alice/ag_data", &alice);
    assert!(root.as_array().unwrap().iter().any(|d| d["path"] == "/alice/ag_data/public_data"));
    let owners = h.ok_get("/api_list_sub_items?path=/alice/ag_data/public_data", &alice);
    assert_eq!(owners.as_array().unwrap().len(), 1);
    assert_eq!(owners[0]["path"], "/alice/ag_data/public_data/bob");
    let v = h.ok_get("/api_meta_data?path=/alice/ag_data/public_data/bob/f/g/x.csv", &alice);
    assert_eq!(v["owner"], "bob");
    let (s, bytes) = h.call("GET", "/api_download?path=/bob/ag_data/f/g/x.csv", Some(&alice), b"");
    assert_eq!((s, bytes.as_slice()), (StatusCode::OK, b"x".as_slice()));
    // bob cannot see alice's virtual folder
    assert_eq!(h.get("/api_list_sub_items?path=/alice/ag_data/public_data", &bob).0, StatusCode::NOT_FOUND);

    let affected = h.ok_post("/api_visibility?path=/bob/ag_data/f&privilege=private", &bob, b"");
    assert_eq!(affected.as_array().unwrap().len(), 3);
    assert_eq!(h.ok_get("/api_list_sub_items?path=/alice/ag_data/public_data", &alice), json!([]));
    assert_eq!(h.get("/api_meta_data?path=/bob/ag_data/f/g/x.csv", &alice).0, StatusCode::NOT_FOUND);
}

#[test]
fn copy_move_delete_collections_and_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::at(dir.path());
    let key = h.user("alice");
    h.mkdir(&key, "/alice/ag_data/exp1");
    let a = h.upload(&key, "/alice/ag_data/a.csv", "data", b"abc");
    let moved = h.ok_post("/api_move?src=/alice/ag_data/a.csv&dst=/alice/ag_data/exp1/a.csv", &key, b"");
    assert_eq!(moved["entity_id"], a["entity_id"]);
    h.ok_post("/api_visibility?path=/alice/ag_data/exp1/a.csv&privilege=public", &key, b"");
    let copy = h.ok_post("/api_copy?src=/alice/ag_data/exp1/a.csv&dst=/alice/ag_data/b.csv", &key, b"");
    assert_ne!(copy["entity_id"], a["entity_id"]);
    assert_eq!(copy["privilege"], "private");
    assert_eq!(copy["content_hash"], a["content_hash"]);

    let coll = h.ok_post("/api_collection?action=create&path=/alice/ag_data/set.coll", &key, br#"{"description":"picks"}"#);
    assert_eq!(coll["mode"], "collection");
    h.ok_post("/api_collection?action=add&path=/alice/ag_data/set.coll&member=/alice/ag_data/b.csv", &key, b"");
    let listed = h.ok_get("/api_list_sub_items?path=/alice/ag_data/set.coll", &key);
    assert_eq!(listed[0]["path"], "/alice/ag_data/b.csv");
    let (s, v) = h.post("/api_collection?action=add&path=/alice/ag_data/set.coll&member=/alice/ag_data/b.csv", &key, b"");
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::CONFLICT, Some("conflict")));
    h.ok_post("/api_collection?action=rm&path=/alice/ag_data/set.coll&member=/alice/ag_data/b.csv", &key, b"");

    let p = h.ok_get("/api_pipeline?path=/alice/ag_data/b.csv&depth=4", &key);
    let kinds: Vec<&str> = p["edges"].as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"copy") && kinds.contains(&"upload") && kinds.contains(&"move"), "{kinds:?}");
    assert!(p["dot"].as_str().unwrap().starts_with("digraph"));

    let removed = h.ok_post("/api_delete?path=/alice/ag_data/exp1", &key, b"");
    assert_eq!(removed["removed"].as_array().unwrap().len(), 2);
    assert_eq!(h.get("/api_meta_data?path=/alice/ag_data/exp1/a.csv", &key).0, StatusCode::NOT_FOUND);
    let id = a["entity_id"].as_str().unwrap();
    let p = h.ok_get(&format!("/api_pipeline?id={id}"), &key);
    let node = p["nodes"].as_array().unwrap().iter().find(|n| n["entity_id"] == id).unwrap().clone();
    assert_eq!(node["deleted"], true);
}
