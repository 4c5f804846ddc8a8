//! Simulated services, their containers, and request pausing.

use std::collections::VecDeque;

use super::spec::{ContainerSpec, ServiceSpec};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub serial: u64,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimContainer {
    pub field: String,
    pub class_name: String,
    pub growth_rate: f64,
    pub element_size: u64,
    pub element_class: String,
    pub flush_on_rejuvenate: bool,
    /// Oldest first.
    pub elements: VecDeque<Element>,
    initial_elements: u64,
    next_serial: u64,
    pending_growth: f64,
}

impl SimContainer {
    pub fn new(spec: &ContainerSpec) -> Self {
        let mut c = SimContainer {
            field: spec.field.clone(),
            class_name: spec.class_name.clone(),
            growth_rate: spec.growth_rate,
            element_size: spec.element_size,
            element_class: spec.element_class.clone(),
            flush_on_rejuvenate: spec.flush_on_rejuvenate,
            elements: VecDeque::new(),
            initial_elements: spec.initial_elements,
            next_serial: 0,
            pending_growth: 0.0,
        };
        c.add(spec.initial_elements, 0);
        c
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn bytes(&self) -> u64 {
        self.elements.len() as u64 * self.element_size
    }

    pub fn add(&mut self, n: u64, now_ms: u64) {
        for _ in 0..n {
            self.elements.push_back(Element {
                serial: self.next_serial,
                created_at_ms: now_ms,
            });
            self.next_serial += 1;
        }
    }

    /// Accrues `expected` elements, adding the whole part now.
    pub fn grow(&mut self, expected: f64, now_ms: u64) {
        self.pending_growth += expected;
        let whole = self.pending_growth.floor();
        self.pending_growth -= whole;
        self.add(whole as u64, now_ms);
    }

    /// Removes the oldest `fraction` of the elements (all of them at 1.0).
    pub fn flush(&mut self, fraction: f64) -> usize {
        let n = ((self.elements.len() as f64) * fraction).ceil() as usize;
        let n = n.min(self.elements.len());
        self.elements.drain(..n);
        n
    }

    /// Back to the freshly-booted contents.
    pub fn reboot(&mut self, now_ms: u64) {
        self.elements.clear();
        self.pending_growth = 0.0;
        let n = self.initial_elements;
        self.add(n, now_ms);
    }
}

/// Outcome of submitting one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Submission {
    Processed,
    Queued,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimService {
    pub name: String,
    pub class_name: String,
    pub registered_rejuvenable: bool,
    pub containers: Vec<SimContainer>,
    paused_until_ms: Option<u64>,
    queue: VecDeque<u64>,
}

impl SimService {
    pub fn new(spec: &ServiceSpec) -> Self {
        SimService {
            name: spec.name.clone(),
            class_name: spec.class_name.clone(),
            registered_rejuvenable: spec.registered_rejuvenable,
            containers: spec.containers.iter().map(SimContainer::new).collect(),
            paused_until_ms: None,
            queue: VecDeque::new(),
        }
    }

    pub fn is_paused(&self) -> bool {
        self.paused_until_ms.is_some()
    }

    pub fn paused_until(&self) -> Option<u64> {
        self.paused_until_ms
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn bytes(&self) -> u64 {
        self.containers.iter().map(SimContainer::bytes).sum()
    }

    /// Handles an incoming request: processed at once, or queued while paused.
    pub fn submit(&mut self, request: u64) -> Submission {
        if self.is_paused() {
            self.queue.push_back(request);
            Submission::Queued
        } else {
            Submission::Processed
        }
    }

    pub fn pause(&mut self, until_ms: u64) {
        self.paused_until_ms = Some(self.paused_until_ms.map_or(until_ms, |u| u.max(until_ms)));
    }

    /// Ends the pause and returns the queued requests in arrival order.
    pub fn resume(&mut self) -> Vec<u64> {
        self.paused_until_ms = None;
        self.queue.drain(..).collect()
    }
}

/// Result of one micro-rejuvenation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlushEvent {
    pub service: String,
    /// Elements removed, per container in declaration order.
    pub removed: Vec<usize>,
    pub pause_until_ms: u64,
}

/// Pauses request handling for `pause_ms` and flushes the selected
/// containers (by default those flagged `flush_on_rejuvenate`).
pub fn rejuvenate_service(
    service: &mut SimService,
    now_ms: u64,
    pause_ms: u64,
    flush_fraction: f64,
    selected: Option<&dyn Fn(usize, &SimContainer) -> bool>,
) -> Result<FlushEvent, SimError> {
    if !service.registered_rejuvenable {
        return Err(SimError::NotRejuvenable(service.name.clone()));
    }
    let until = now_ms + pause_ms;
    service.pause(until);
    let removed = service
        .containers
        .iter_mut()
        .enumerate()
        .map(|(i, c)| {
            let chosen = match selected {
                Some(f) => f(i, c),
                None => c.flush_on_rejuvenate,
            };
            if chosen {
                c.flush(flush_fraction)
            } else {
                0
            }
        })
        .collect();
    Ok(FlushEvent {
        service: service.name.clone(),
        removed,
        pause_until_ms: until,
    })
}
