//! In-memory session store.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use litterbox_core::lint::{run_detectors, Issue, Selection};
use litterbox_core::model::Program;

pub struct Session {
    pub current: Program,
    /// Earlier versions, most recent last.
    pub history: VecDeque<Program>,
    pub issues: Vec<Issue>,
    depth: usize,
}

impl Session {
    pub fn new(program: Program, depth: usize) -> Self {
        let issues = detect(&program);
        Session {
            current: program,
            history: VecDeque::new(),
            issues,
            depth,
        }
    }

    /// Makes `program` current and remembers the previous one. The oldest
    /// snapshot is forgotten once the history is full.
    pub fn replace(&mut self, program: Program) {
        let previous = std::mem::replace(&mut self.current, program);
        self.history.push_back(previous);
        while self.history.len() > self.depth {
            self.history.pop_front();
        }
        self.issues = detect(&self.current);
    }

    /// Goes back to the previous program. Returns false when there is none.
    pub fn revert(&mut self) -> bool {
        match self.history.pop_back() {
            Some(previous) => {
                self.current = previous;
                self.issues = detect(&self.current);
                true
            }
            None => false,
        }
    }
}

fn detect(program: &Program) -> Vec<Issue> {
    run_detectors(program, &Selection::All).expect("all detectors are registered")
}

type Entry = (Arc<tokio::sync::Mutex<Session>>, Instant);

/// Sessions by id. Each session has its own lock, so requests for one
/// session run one at a time while different sessions proceed in parallel.
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Entry>>,
    ttl: Duration,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            sessions: Mutex::new(HashMap::new()),
            ttl,
        }
    }

    pub fn insert(&self, session: Session) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let mut sessions = self.sessions.lock().unwrap();
        self.evict(&mut sessions);
        sessions.insert(id.clone(), (Arc::new(tokio::sync::Mutex::new(session)), Instant::now()));
        id
    }

    pub fn get(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<Session>>> {
        let mut sessions = self.sessions.lock().unwrap();
        self.evict(&mut sessions);
        let entry = sessions.get_mut(id)?;
        entry.1 = Instant::now();
        Some(entry.0.clone())
    }

    pub fn len(&self) -> usize {
        let mut sessions = self.sessions.lock().unwrap();
        self.evict(&mut sessions);
        sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn evict(&self, sessions: &mut HashMap<String, Entry>) {
        let now = Instant::now();
        sessions.retain(|_, (_, used)| now.duration_since(*used) < self.ttl);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use litterbox_core::testing::{boatrace, boatrace_fixed};

    #[test]
    fn history_is_bounded() {
        let mut s = Session::new(boatrace(), 2);
        for _ in 0..5 {
            s.replace(boatrace_fixed());
        }
        assert_eq!(s.history.len(), 2);
        assert!(s.revert() && s.revert());
        assert!(!s.revert());
    }

    #[test]
    fn issues_follow_the_current_program() {
        let mut s = Session::new(boatrace(), 16);
        assert_eq!(s.issues.len(), 1);
        s.replace(boatrace_fixed());
        assert_eq!(s.issues[0].finder, "LoopedCondition");
        s.revert();
        assert_eq!(s.issues[0].finder, "MissingLoop");
    }

    #[test]
    fn idle_sessions_expire() {
        let store = SessionStore::new(Duration::from_millis(30));
        let id = store.insert(Session::new(boatrace(), 16));
        assert!(store.get(&id).is_some());
        std::thread::sleep(Duration::from_millis(60));
        assert!(store.get(&id).is_none());
        assert!(store.is_empty());
    }
}
