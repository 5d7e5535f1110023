use latbench_core::codec::{encode_query, QuerySpec, QueryType};
use latbench_core::resolver::{RankedServerList, ResolveError, Resolver, Transport, UpstreamServer};
use latbench_core::simulator::{
    min_of_k_oracle, LatencyDistribution, LoopbackWorld, SimTransport, SimUpstream, SimWorld,
};
use latbench_core::stats::{nearest_rank, sorted, Statistic};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn constant(label: &str, ms: f64) -> SimUpstream {
    SimUpstream::new(label, LatencyDistribution::Constant { ms })
}

fn exp(mean_ms: f64) -> SimUpstream {
    SimUpstream::new(
        "exp",
        LatencyDistribution::ShiftedExponential { shift_ms: 0.0, mean_ms },
    )
}

fn sim(world: SimWorld) -> (Resolver<SimTransport>, RankedServerList) {
    let ranked = RankedServerList::in_given_order(world.servers()).unwrap();
    (Resolver::new(SimTransport::new(world)), ranked)
}

fn query(id: u16) -> QuerySpec {
    QuerySpec::new("example.com", QueryType::A, id)
}

fn winner_latencies(resolver: &Resolver<SimTransport>, ranked: &RankedServerList, k: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            resolver
                .resolve_raced(&query(i as u16), ranked, k, 5_000.0)
                .unwrap()
                .latency_ms
                .expect("no loss configured")
        })
        .collect()
}

#[test]
fn single_server_constant_latency() {
    let (resolver, ranked) = sim(SimWorld::new(1, vec![constant("c", 40.0)]).unwrap());
    let r = resolver.resolve_raced(&query(1), &ranked, 1, 5_000.0).unwrap();
    assert_eq!(r.winner_index, Some(0));
    assert_eq!(r.latency_ms, Some(40.0));
    assert!(!r.timed_out);
    assert_eq!(r.per_server[0].reply_latency_ms, r.latency_ms);
    assert_eq!(r.response.as_ref().unwrap().addresses.len(), 1);
}

#[test]
fn two_exponentials_halve_the_mean() {
    let (resolver, ranked) = sim(SimWorld::uniform(11, 2, exp(100.0)).unwrap());
    let lat = winner_latencies(&resolver, &ranked, 2, 20_000);
    let mean = lat.iter().sum::<f64>() / lat.len() as f64;
    assert!((mean - 50.0).abs() / 50.0 < 0.05, "mean {mean}");
}

#[test]
fn total_loss_times_out() {
    let world = SimWorld::uniform(3, 2, constant("x", 10.0).with_loss(1.0)).unwrap();
    let (resolver, ranked) = sim(world);
    let r = resolver.resolve_raced(&query(5), &ranked, 2, 200.0).unwrap();
    assert!(r.timed_out);
    assert_eq!(r.winner_index, None);
    assert_eq!(r.latency_ms, None);
    assert_eq!(r.bytes_received_total(), 0);
    assert_eq!(r.bytes_sent_total(), 2 * 29);
    // the whole window was spent listening
    assert_eq!(resolver.transport().elapsed_ms(), 200.0);
}

#[test]
fn bytes_sent_is_k_times_query() {
    let (resolver, ranked) = sim(SimWorld::uniform(5, 10, exp(30.0).with_response_bytes(80)).unwrap());
    let q = query(77);
    let len = encode_query(&q).unwrap().len() as u64;
    for k in 1..=10 {
        let r = resolver.resolve_raced(&q, &ranked, k, 5_000.0).unwrap();
        assert_eq!(r.bytes_sent_total(), k as u64 * len);
        assert_eq!(r.bytes_received_total(), k as u64 * 80);
        assert!(r.per_server.iter().all(|s| s.bytes_sent > 0));
        assert_eq!(r.baseline_bytes(), len + 80);
    }
}

#[test]
fn negative_answers_do_not_win() {
    let world = SimWorld::new(
        9,
        vec![constant("fast-fail", 5.0).with_rcode(2), constant("slow-ok", 50.0)],
    )
    .unwrap();
    let (resolver, ranked) = sim(world);
    let r = resolver.resolve_raced(&query(3), &ranked, 2, 1_000.0).unwrap();
    assert_eq!(r.winner_index, Some(1));
    assert_eq!(r.latency_ms, Some(50.0));
    assert_eq!(r.per_server[0].rcode, Some(2));
    assert!(r.per_server[0].replied);
    assert!(r.per_server[0].bytes_received > 0);
}

#[test]
fn only_negative_answers_means_no_winner() {
    let world = SimWorld::new(9, vec![constant("fail", 5.0).with_rcode(3)]).unwrap();
    let (resolver, ranked) = sim(world);
    let r = resolver.resolve_raced(&query(3), &ranked, 1, 1_000.0).unwrap();
    assert!(r.timed_out);
    assert!(r.per_server[0].bytes_received > 0);
    // baseline falls back to what the top-ranked server sent
    assert_eq!(r.baseline_bytes(), r.bytes_sent_total() + r.bytes_received_total());
}

#[test]
fn winner_is_never_slower_than_other_replies() {
    let world = SimWorld::new(
        21,
        vec![
            exp(50.0),
            SimUpstream::new("ln", LatencyDistribution::LogNormal { mu: 3.5, sigma: 0.8 }),
            SimUpstream::new(
                "emp",
                LatencyDistribution::Empirical {
                    samples_ms: vec![5.0, 40.0, 90.0, 400.0],
                },
            )
            .with_loss(0.2),
            constant("c", 33.0).with_loss(0.5),
        ],
    )
    .unwrap();
    let (resolver, ranked) = sim(world);
    for i in 0..2_000u16 {
        let r = resolver.resolve_raced(&query(i), &ranked, 4, 5_000.0).unwrap();
        let Some(best) = r.latency_ms else { continue };
        assert!(r
            .per_server
            .iter()
            .filter_map(|s| s.reply_latency_ms)
            .all(|t| best <= t));
        assert!(best <= 5_000.0);
        assert_eq!(r.per_server[r.winner_index.unwrap()].reply_latency_ms, Some(best));
    }
}

#[test]
fn adding_a_server_never_hurts() {
    let (resolver, ranked) = sim(SimWorld::uniform(17, 6, exp(100.0)).unwrap());
    let mut previous: Option<(f64, f64)> = None;
    for k in 1..=6 {
        let lat = sorted(winner_latencies(&resolver, &ranked, k, 20_000));
        let mean = Statistic::Mean.of_sorted(&lat);
        let p95 = nearest_rank(&lat, 0.95);
        if let Some((m, p)) = previous {
            assert!(mean <= m * 1.02, "k={k}: mean {mean} vs {m}");
            assert!(p95 <= p * 1.02, "k={k}: p95 {p95} vs {p}");
        }
        previous = Some((mean, p95));
    }
}

#[test]
fn matches_min_of_k_oracle() {
    let dist = LatencyDistribution::ShiftedExponential {
        shift_ms: 10.0,
        mean_ms: 90.0,
    };
    let world = SimWorld::uniform(23, 5, SimUpstream::new("e", dist.clone())).unwrap();
    let (resolver, ranked) = sim(world);
    for k in [1, 3, 5] {
        let lat = sorted(winner_latencies(&resolver, &ranked, k, 20_000));
        let mean = Statistic::Mean.of_sorted(&lat);
        let p95 = Statistic::P95.of_sorted(&lat);
        let want_mean = min_of_k_oracle(&dist, k, Statistic::Mean).unwrap();
        let want_p95 = min_of_k_oracle(&dist, k, Statistic::P95).unwrap();
        assert!(
            (mean - want_mean).abs() / want_mean < 0.05,
            "k={k} mean {mean} vs {want_mean}"
        );
        assert!(
            (p95 - want_p95).abs() / want_p95 < 0.08,
            "k={k} p95 {p95} vs {want_p95}"
        );
    }
}

#[test]
fn send_failures_are_recorded_not_fatal() {
    let world = SimWorld::new(2, vec![constant("only", 10.0)]).unwrap();
    let stranger = UpstreamServer::new("192.0.2.200".parse().unwrap(), 53, "unknown");
    let mut servers = vec![stranger.clone()];
    servers.extend(world.servers());
    let ranked = RankedServerList::in_given_order(servers).unwrap();
    let resolver = Resolver::new(SimTransport::new(world));
    let r = resolver.resolve_raced(&query(4), &ranked, 2, 1_000.0).unwrap();
    assert!(r.per_server[0].send_error.is_some());
    assert_eq!(r.per_server[0].bytes_sent, 0);
    assert_eq!(r.winner_index, Some(1));

    let only_stranger = RankedServerList::in_given_order(vec![stranger]).unwrap();
    assert!(matches!(
        resolver.resolve_raced(&query(4), &only_stranger, 1, 1_000.0),
        Err(ResolveError::NoServerContacted(1))
    ));
}

#[test]
fn replication_level_is_checked() {
    let (resolver, ranked) = sim(SimWorld::uniform(1, 2, exp(10.0)).unwrap());
    assert!(matches!(
        resolver.resolve_raced(&query(1), &ranked, 0, 100.0),
        Err(ResolveError::BadReplication { .. })
    ));
    assert!(matches!(
        resolver.resolve_raced(&query(1), &ranked, 3, 100.0),
        Err(ResolveError::BadReplication { .. })
    ));
    assert!(matches!(
        resolver.resolve_raced(&query(1), &ranked, 1, 0.0),
        Err(ResolveError::BadDeadline(_))
    ));
}

fn names() -> Vec<String> {
    ["a.test", "b.test", "c.test"].iter().map(|s| s.to_string()).collect()
}

#[test]
fn ranking_sorts_by_mean_latency() {
    let world = SimWorld::new(
        1,
        vec![constant("slow", 80.0), constant("fast", 20.0), constant("mid", 50.0)],
    )
    .unwrap();
    let servers = world.servers();
    let resolver = Resolver::new(SimTransport::new(world));
    let mut ids = ChaCha8Rng::seed_from_u64(0);
    let ranked = resolver
        .probe_and_rank(&servers, 5, &names(), 1_000.0, &mut ids)
        .unwrap();
    let labels: Vec<&str> = ranked.entries().iter().map(|e| e.server.label.as_str()).collect();
    assert_eq!(labels, ["fast", "mid", "slow"]);
    let means: Vec<f64> = ranked.entries().iter().map(|e| e.probe_mean_ms.unwrap()).collect();
    assert_eq!(means, [20.0, 50.0, 80.0]);
    assert!(ranked.entries().iter().all(|e| e.probes_ok == 5 && e.probes_sent == 5));
}

#[test]
fn ranking_ties_keep_input_order() {
    let world = SimWorld::new(
        1,
        vec![constant("first", 30.0), constant("second", 30.0), constant("zero", 5.0)],
    )
    .unwrap();
    let servers = world.servers();
    let resolver = Resolver::new(SimTransport::new(world));
    let ranked = resolver
        .probe_and_rank(&servers, 3, &names(), 1_000.0, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    let labels: Vec<&str> = ranked.entries().iter().map(|e| e.server.label.as_str()).collect();
    assert_eq!(labels, ["zero", "first", "second"]);
}

#[test]
fn ranking_singleton_and_unreachable() {
    let world = SimWorld::new(1, vec![constant("dead", 1.0).with_loss(1.0), constant("alive", 60.0)]).unwrap();
    let servers = world.servers();
    let resolver = Resolver::new(SimTransport::new(world));
    let mut ids = ChaCha8Rng::seed_from_u64(2);
    let ranked = resolver.probe_and_rank(&servers, 2, &names(), 200.0, &mut ids).unwrap();
    assert_eq!(ranked.entries()[0].server.label, "alive");
    assert_eq!(ranked.entries()[1].probe_mean_ms, None);
    assert_eq!(ranked.entries()[1].probes_ok, 0);

    let single = resolver
        .probe_and_rank(&servers[1..], 1, &names(), 200.0, &mut ids)
        .unwrap();
    assert_eq!(single.len(), 1);

    assert!(matches!(
        resolver.probe_and_rank(&servers[..1], 2, &names(), 200.0, &mut ids),
        Err(ResolveError::AllUnreachable)
    ));
    assert!(matches!(
        resolver.probe_and_rank(&[], 2, &names(), 200.0, &mut ids),
        Err(ResolveError::NoServers)
    ));
    assert!(matches!(
        resolver.probe_and_rank(&servers, 0, &names(), 200.0, &mut ids),
        Err(ResolveError::NoProbes)
    ));
    assert!(matches!(
        resolver.probe_and_rank(&servers, 1, &[], 200.0, &mut ids),
        Err(ResolveError::NoProbeNames)
    ));
}

#[test]
fn ranked_list_json_round_trip_and_validation() {
    let world = SimWorld::new(1, vec![constant("b", 20.0), constant("a", 10.0)]).unwrap();
    let servers = world.servers();
    let resolver = Resolver::new(SimTransport::new(world));
    let ranked = resolver
        .probe_and_rank(&servers, 1, &names(), 100.0, &mut ChaCha8Rng::seed_from_u64(3))
        .unwrap();
    let text = serde_json::to_string(&ranked).unwrap();
    assert_eq!(serde_json::from_str::<RankedServerList>(&text).unwrap(), ranked);

    let mut entries = ranked.entries().to_vec();
    entries.reverse();
    assert!(RankedServerList::new(entries).is_err());
    assert!(RankedServerList::in_given_order(vec![servers[0].clone(), servers[0].clone()]).is_err());
}

#[test]
fn real_udp_path_over_loopback() {
    use latbench_core::resolver::UdpTransport;

    let world = SimWorld::new(
        5,
        vec![constant("slow", 80.0), constant("fast", 20.0), constant("mid", 50.0)],
    )
    .unwrap();
    let served = LoopbackWorld::spawn(&world).unwrap();
    let resolver = Resolver::new(UdpTransport::new().unwrap());
    let mut ids = ChaCha8Rng::seed_from_u64(9);
    let ranked = resolver
        .probe_and_rank(served.servers(), 2, &names(), 2_000.0, &mut ids)
        .unwrap();
    let labels: Vec<&str> = ranked.entries().iter().map(|e| e.server.label.as_str()).collect();
    assert_eq!(labels, ["fast", "mid", "slow"]);

    let q = query(0xBEEF);
    let r = resolver.resolve_raced(&q, &ranked, 3, 2_000.0).unwrap();
    assert_eq!(r.winner_index, Some(0));
    let latency = r.latency_ms.unwrap();
    assert!((20.0..75.0).contains(&latency), "latency {latency}");
    // stragglers still accounted
    assert!(r.per_server.iter().all(|s| s.replied && s.bytes_received == 100));
    assert_eq!(r.bytes_sent_total(), 3 * encode_query(&q).unwrap().len() as u64);
}

#[test]
fn real_udp_loss_times_out() {
    use latbench_core::resolver::UdpTransport;

    let world = SimWorld::new(
        5,
        vec![
            constant("lossy", 1.0).with_loss(1.0),
            constant("lossy2", 1.0).with_loss(1.0),
        ],
    )
    .unwrap();
    let served = LoopbackWorld::spawn(&world).unwrap();
    let resolver = Resolver::new(UdpTransport::new().unwrap());
    let ranked = RankedServerList::in_given_order(served.servers().to_vec()).unwrap();
    let started = std::time::Instant::now();
    let r = resolver.resolve_raced(&query(1), &ranked, 2, 200.0).unwrap();
    assert!(r.timed_out);
    assert_eq!(r.bytes_received_total(), 0);
    assert!(started.elapsed().as_millis() >= 200);
}
