//! Echo/ready reliable broadcast from the writer to the servers.
//!
//! Thresholds for `n` servers and `f` faults: a server readies once it has
//! `ceil((n+f+1)/2)` matching echoes or `f+1` matching readies, and delivers
//! on `2f+1` matching readies provided it holds a body with that digest.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::Digest;
use crate::message::{BroadcastId, Envelope, Payload, WriteBody};
use crate::types::{ProcessId, ProtocolParams, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thresholds {
    pub echo: usize,
    pub amplify: usize,
    pub deliver: usize,
}

impl Thresholds {
    pub fn of(params: &ProtocolParams) -> Self {
        Self { echo: (params.n + params.f + 1).div_ceil(2), amplify: params.f + 1, deliver: 2 * params.f + 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0} may not originate a reliable broadcast")]
pub struct RoleError(pub ProcessId);

/// Builds the INIT fan-out for one write.
pub fn rb_broadcast(sender: ProcessId, body: WriteBody, params: &ProtocolParams) -> Result<Vec<Envelope>, RoleError> {
    if sender.role != Role::Writer {
        return Err(RoleError(sender));
    }
    let id = BroadcastId { writer: sender, ts: body.ts };
    Ok(params
        .servers()
        .map(|s| Envelope::new(sender, s, Payload::RbInit { id, body: body.clone() }))
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct RbInstance {
    pub echoed: bool,
    pub readied: bool,
    pub delivered: Option<Digest>,
    pub echoes: BTreeMap<Digest, BTreeSet<u32>>,
    pub readies: BTreeMap<Digest, BTreeSet<u32>>,
    bodies: BTreeMap<Digest, WriteBody>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbDelivery {
    pub id: BroadcastId,
    pub digest: Digest,
    pub body: WriteBody,
}

#[derive(Debug, Default)]
pub struct RbOutput {
    pub sends: Vec<Envelope>,
    pub delivery: Option<RbDelivery>,
}

/// One server's broadcast state across all instances.
#[derive(Debug, Clone)]
pub struct RbEngine {
    me: ProcessId,
    params: ProtocolParams,
    thresholds: Thresholds,
    /// `false` turns the protocol into best-effort delivery of INIT.
    relay: bool,
    instances: BTreeMap<BroadcastId, RbInstance>,
}

impl RbEngine {
    pub fn new(me: ProcessId, params: ProtocolParams, relay: bool) -> Self {
        Self { me, params, thresholds: Thresholds::of(&params), relay, instances: BTreeMap::new() }
    }

    pub fn instance(&self, id: &BroadcastId) -> Option<&RbInstance> {
        self.instances.get(id)
    }

    /// Processes an INIT/ECHO/READY; other payloads are ignored.
    pub fn handle(&mut self, env: &Envelope) -> RbOutput {
        let mut out = RbOutput::default();
        let from = env.sender;
        match &env.payload {
            Payload::RbInit { id, body } => {
                if from != id.writer || body.ts != id.ts || id.writer.role != Role::Writer {
                    return out;
                }
                let digest = body.digest();
                if !self.relay {
                    let inst = self.instances.entry(*id).or_default();
                    if inst.delivered.is_none() {
                        inst.delivered = Some(digest);
                        out.delivery = Some(RbDelivery { id: *id, digest, body: body.clone() });
                    }
                    return out;
                }
                let inst = self.instances.entry(*id).or_default();
                inst.bodies.entry(digest).or_insert_with(|| body.clone());
                if !inst.echoed {
                    inst.echoed = true;
                    let payload = Payload::RbEcho { id: *id, digest, body: Some(body.clone()) };
                    out.sends.extend(self.to_all(payload));
                }
            }
            Payload::RbEcho { id, digest, body } => {
                if !self.relay || !from.is_server() || from.index as usize > self.params.n {
                    return out;
                }
                if let Some(b) = body {
                    if b.digest() != *digest || b.ts != id.ts {
                        return out;
                    }
                }
                let inst = self.instances.entry(*id).or_default();
                if let Some(b) = body {
                    inst.bodies.entry(*digest).or_insert_with(|| b.clone());
                }
                inst.echoes.entry(*digest).or_default().insert(from.index);
            }
            Payload::RbReady { id, digest } => {
                if !self.relay || !from.is_server() || from.index as usize > self.params.n {
                    return out;
                }
                self.instances.entry(*id).or_default().readies.entry(*digest).or_default().insert(from.index);
            }
            _ => return out,
        }
        let id = match &env.payload {
            Payload::RbInit { id, .. } | Payload::RbEcho { id, .. } | Payload::RbReady { id, .. } => *id,
            _ => unreachable!(),
        };
        self.progress(id, &mut out);
        out
    }

    fn progress(&mut self, id: BroadcastId, out: &mut RbOutput) {
        let th = self.thresholds;
        let inst = self.instances.get_mut(&id).expect("instance exists");
        if !inst.readied {
            let by_echo = inst.echoes.iter().find(|(_, s)| s.len() >= th.echo).map(|(d, _)| *d);
            let by_ready = inst.readies.iter().find(|(_, s)| s.len() >= th.amplify).map(|(d, _)| *d);
            if let Some(digest) = by_echo.or(by_ready) {
                inst.readied = true;
                let payload = Payload::RbReady { id, digest };
                out.sends.extend(self.to_all(payload));
            }
        }
        let inst = self.instances.get_mut(&id).expect("instance exists");
        if inst.delivered.is_none() {
            let ready = inst.readies.iter().find(|(d, s)| s.len() >= th.deliver && inst.bodies.contains_key(*d));
            if let Some((digest, _)) = ready {
                let digest = *digest;
                inst.delivered = Some(digest);
                out.delivery = Some(RbDelivery { id, digest, body: inst.bodies[&digest].clone() });
            }
        }
    }

    fn to_all(&self, payload: Payload) -> Vec<Envelope> {
        self.params.servers().map(|s| Envelope::new(self.me, s, payload.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;

    use super::*;
    use crate::types::Timestamp;

    fn params() -> ProtocolParams {
        ProtocolParams::standard(1).unwrap()
    }

    fn body(ts: u64) -> WriteBody {
        WriteBody { ts: Timestamp(ts), blocks: vec![] }
    }

    #[test]
    fn thresholds_for_four_servers() {
        assert_eq!(Thresholds::of(&params()), Thresholds { echo: 3, amplify: 2, deliver: 3 });
        let p7 = ProtocolParams::standard(2).unwrap();
        assert_eq!(Thresholds::of(&p7), Thresholds { echo: 5, amplify: 3, deliver: 5 });
    }

    #[test]
    fn broadcast_fans_out_to_every_server() {
        let envs = rb_broadcast(ProcessId::writer(), body(1), &params()).unwrap();
        assert_eq!(envs.len(), 4);
        assert!(rb_broadcast(ProcessId::reader(1), body(1), &params()).is_err());
    }

    /// Runs engines to quiescence, delivering in FIFO order, skipping
    /// envelopes addressed to servers listed in `mute`.
    fn run(engines: &mut [RbEngine], initial: Vec<Envelope>, mute: &[u32]) -> Vec<Option<RbDelivery>> {
        let mut q: VecDeque<Envelope> = initial.into();
        let mut got = vec![None; engines.len()];
        while let Some(env) = q.pop_front() {
            let i = env.receiver.index;
            if mute.contains(&i) {
                continue;
            }
            let out = engines[i as usize - 1].handle(&env);
            if let Some(d) = out.delivery {
                assert!(got[i as usize - 1].is_none(), "double delivery");
                got[i as usize - 1] = Some(d);
            }
            q.extend(out.sends);
        }
        got
    }

    fn engines() -> Vec<RbEngine> {
        (1..=4).map(|i| RbEngine::new(ProcessId::server(i), params(), true)).collect()
    }

    #[test]
    fn all_correct_servers_deliver() {
        let mut e = engines();
        let got = run(&mut e, rb_broadcast(ProcessId::writer(), body(1), &params()).unwrap(), &[]);
        assert!(got.iter().all(|d| d.as_ref().map(|d| d.body.ts) == Some(Timestamp(1))));
    }

    #[test]
    fn one_silent_server_does_not_block_delivery() {
        let mut e = engines();
        let got = run(&mut e, rb_broadcast(ProcessId::writer(), body(1), &params()).unwrap(), &[4]);
        assert!(got[..3].iter().all(Option::is_some));
    }

    #[test]
    fn init_reaching_one_server_is_not_enough_without_echo_quorum() {
        let mut e = engines();
        let init = rb_broadcast(ProcessId::writer(), body(1), &params()).unwrap();
        let got = run(&mut e, init.into_iter().take(1).collect(), &[]);
        assert!(got.iter().all(Option::is_none));
    }

    #[test]
    fn duplicate_ready_counts_once() {
        let mut e = RbEngine::new(ProcessId::server(1), params(), true);
        let id = BroadcastId { writer: ProcessId::writer(), ts: Timestamp(1) };
        let d = body(1).digest();
        let r = Envelope::new(ProcessId::server(2), ProcessId::server(1), Payload::RbReady { id, digest: d });
        e.handle(&r);
        let out = e.handle(&r);
        assert!(out.sends.is_empty());
        assert_eq!(e.instance(&id).unwrap().readies[&d].len(), 1);
    }

    #[test]
    fn single_byzantine_cannot_inject_a_payload() {
        // server 4 echoes and readies a body the writer never sent
        let mut e = engines();
        let fake = body(7);
        let id = BroadcastId { writer: ProcessId::writer(), ts: Timestamp(7) };
        let d = fake.digest();
        let mut inject = vec![];
        for s in 1..=3 {
            inject.push(Envelope::new(
                ProcessId::server(4),
                ProcessId::server(s),
                Payload::RbEcho { id, digest: d, body: Some(fake.clone()) },
            ));
            inject.push(Envelope::new(ProcessId::server(4), ProcessId::server(s), Payload::RbReady { id, digest: d }));
        }
        let got = run(&mut e, inject, &[4]);
        assert!(got.iter().all(Option::is_none));
        // a forged INIT from a server is ignored outright
        let forged = Envelope::new(ProcessId::server(4), ProcessId::server(1), Payload::RbInit { id, body: fake });
        assert!(e[0].handle(&forged).sends.is_empty());
    }

    #[test]
    fn mismatched_echo_body_is_ignored() {
        let mut e = RbEngine::new(ProcessId::server(1), params(), true);
        let id = BroadcastId { writer: ProcessId::writer(), ts: Timestamp(1) };
        let env = Envelope::new(
            ProcessId::server(2),
            ProcessId::server(1),
            Payload::RbEcho { id, digest: body(2).digest(), body: Some(body(1)) },
        );
        e.handle(&env);
        assert!(e.instance(&id).map_or(true, |i| i.echoes.is_empty()));
    }

    #[test]
    fn without_relay_init_delivers_directly() {
        let mut e = RbEngine::new(ProcessId::server(1), params(), false);
        let init = rb_broadcast(ProcessId::writer(), body(1), &params()).unwrap();
        let out = e.handle(&init[0]);
        assert!(out.sends.is_empty());
        assert!(out.delivery.is_some());
        assert!(e.handle(&init[0]).delivery.is_none());
    }
}
