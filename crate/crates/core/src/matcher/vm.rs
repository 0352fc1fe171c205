//! Backtracking interpreter for compiled patterns.
//!
//! Threads are explored depth-first in priority order (alternatives in
//! source order, repetition greedy). A visited bit per (pc, position) keeps
//! the search polynomial: whether a state can still reach a full match does
//! not depend on the captures recorded on the way there.

use super::{ByteSet, CaptureSpan, PatternNode};

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchOutcome {
    Matched(Vec<Option<CaptureSpan>>),
    NoMatch,
    BudgetExceeded,
}

#[derive(Debug, Clone)]
enum Inst {
    Byte(u8),
    Class(Box<ByteSet>),
    /// Try the first target, fall back to the second.
    Split(usize, usize),
    Jmp(usize),
    Save(usize),
    Branch { slot: usize, index: u32 },
    Match,
}

#[derive(Debug, Clone)]
pub(crate) struct Program {
    insts: Vec<Inst>,
}

const UNSET: usize = usize::MAX;
const NO_BRANCH: u32 = u32::MAX;

enum Job {
    Run(usize, usize),
    RestoreSlot(usize, usize),
    RestoreBranch(usize, u32),
}

impl Program {
    pub fn compile(root: &PatternNode) -> Program {
        let mut p = Program { insts: Vec::new() };
        p.emit(root, None);
        p.insts.push(Inst::Match);
        p
    }

    fn push(&mut self, inst: Inst) -> usize {
        self.insts.push(inst);
        self.insts.len() - 1
    }

    fn patch_second(&mut self, at: usize, target: usize) {
        match &mut self.insts[at] {
            Inst::Split(_, b) => *b = target,
            Inst::Jmp(t) => *t = target,
            _ => unreachable!("patching a non-jump"),
        }
    }

    fn emit(&mut self, node: &PatternNode, tag_slot: Option<usize>) {
        match node {
            PatternNode::LiteralCi(text) => {
                for b in text.bytes() {
                    if b.is_ascii_alphabetic() {
                        self.push(Inst::Class(Box::new(ByteSet::caseless(b))));
                    } else {
                        self.push(Inst::Byte(b));
                    }
                }
            }
            PatternNode::Bytes(bytes) => {
                for b in bytes {
                    self.push(Inst::Byte(*b));
                }
            }
            PatternNode::Set(set) => {
                self.push(Inst::Class(Box::new(*set)));
            }
            PatternNode::Seq(items) => items.iter().for_each(|i| self.emit(i, None)),
            PatternNode::Alt(items) => {
                let mut exits = Vec::new();
                for (index, item) in items.iter().enumerate() {
                    let last = index + 1 == items.len();
                    let split = (!last).then(|| {
                        let next = self.insts.len() + 1;
                        self.push(Inst::Split(next, 0))
                    });
                    if let Some(slot) = tag_slot {
                        self.push(Inst::Branch {
                            slot,
                            index: index as u32,
                        });
                    }
                    self.emit(item, None);
                    if let Some(split) = split {
                        exits.push(self.push(Inst::Jmp(0)));
                        let here = self.insts.len();
                        self.patch_second(split, here);
                    }
                }
                let end = self.insts.len();
                for at in exits {
                    self.patch_second(at, end);
                }
            }
            PatternNode::Repeat { min, max, inner } => {
                for _ in 0..*min {
                    self.emit(inner, None);
                }
                match max {
                    Some(max) => {
                        let mut skips = Vec::new();
                        for _ in *min..*max {
                            let next = self.insts.len() + 1;
                            skips.push(self.push(Inst::Split(next, 0)));
                            self.emit(inner, None);
                        }
                        let end = self.insts.len();
                        for at in skips {
                            self.patch_second(at, end);
                        }
                    }
                    None => {
                        let top = self.insts.len();
                        let split = self.push(Inst::Split(top + 1, 0));
                        self.emit(inner, None);
                        self.push(Inst::Jmp(top));
                        let end = self.insts.len();
                        self.patch_second(split, end);
                    }
                }
            }
            PatternNode::Capture {
                slot,
                tag_branch,
                inner,
            } => {
                self.push(Inst::Save(slot * 2));
                self.emit(inner, tag_branch.then_some(*slot));
                self.push(Inst::Save(slot * 2 + 1));
            }
        }
    }

    pub fn exec(&self, subject: &[u8], slot_count: usize, budget: u64) -> MatchOutcome {
        let width = subject.len() + 1;
        let mut visited = vec![0u64; (self.insts.len() * width).div_ceil(64)];
        let mut slots = vec![UNSET; slot_count * 2];
        let mut branches = vec![NO_BRANCH; slot_count];
        let mut stack = vec![Job::Run(0, 0)];
        let mut steps = 0u64;

        while let Some(job) = stack.pop() {
            let (mut pc, mut pos) = match job {
                Job::Run(pc, pos) => (pc, pos),
                Job::RestoreSlot(i, old) => {
                    slots[i] = old;
                    continue;
                }
                Job::RestoreBranch(i, old) => {
                    branches[i] = old;
                    continue;
                }
            };
            loop {
                steps += 1;
                if steps > budget {
                    return MatchOutcome::BudgetExceeded;
                }
                let bit = pc * width + pos;
                if visited[bit / 64] & (1 << (bit % 64)) != 0 {
                    break;
                }
                visited[bit / 64] |= 1 << (bit % 64);
                match &self.insts[pc] {
                    Inst::Byte(b) => {
                        if subject.get(pos) != Some(b) {
                            break;
                        }
                        pc += 1;
                        pos += 1;
                    }
                    Inst::Class(set) => {
                        if !subject.get(pos).is_some_and(|b| set.contains(*b)) {
                            break;
                        }
                        pc += 1;
                        pos += 1;
                    }
                    Inst::Split(a, b) => {
                        stack.push(Job::Run(*b, pos));
                        pc = *a;
                    }
                    Inst::Jmp(t) => pc = *t,
                    Inst::Save(i) => {
                        stack.push(Job::RestoreSlot(*i, slots[*i]));
                        slots[*i] = pos;
                        pc += 1;
                    }
                    Inst::Branch { slot, index } => {
                        stack.push(Job::RestoreBranch(*slot, branches[*slot]));
                        branches[*slot] = *index;
                        pc += 1;
                    }
                    Inst::Match => {
                        if pos != subject.len() {
                            break;
                        }
                        let captures = (0..slot_count)
                            .map(|s| {
                                let (start, end) = (slots[2 * s], slots[2 * s + 1]);
                                (start != UNSET && end != UNSET && start <= end).then(|| CaptureSpan {
                                    start,
                                    end,
                                    branch: (branches[s] != NO_BRANCH).then_some(branches[s]),
                                })
                            })
                            .collect();
                        return MatchOutcome::Matched(captures);
                    }
                }
            }
        }
        MatchOutcome::NoMatch
    }
}
