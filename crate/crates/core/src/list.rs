//! Slab-backed doubly linked list with stable handles.
//!
//! Head is the most recently inserted end; tail is the eviction end.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Handle(usize);

#[derive(Debug)]
struct Node<T> {
    value: Option<T>,
    prev: Option<usize>,
    next: Option<usize>,
}

#[derive(Debug)]
pub struct IndexList<T> {
    nodes: Vec<Node<T>>,
    free: Vec<usize>,
    head: Option<usize>,
    tail: Option<usize>,
    len: usize,
}

impl<T> Default for IndexList<T> {
    fn default() -> Self {
        IndexList {
            nodes: Vec::new(),
            free: Vec::new(),
            head: None,
            tail: None,
            len: 0,
        }
    }
}

impl<T> IndexList<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push_head(&mut self, value: T) -> Handle {
        let node = Node {
            value: Some(value),
            prev: None,
            next: self.head,
        };
        let idx = match self.free.pop() {
            Some(i) => {
                self.nodes[i] = node;
                i
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        };
        match self.head {
            Some(h) => self.nodes[h].prev = Some(idx),
            None => self.tail = Some(idx),
        }
        self.head = Some(idx);
        self.len += 1;
        Handle(idx)
    }

    pub fn remove(&mut self, h: Handle) -> Option<T> {
        let value = self.nodes.get_mut(h.0)?.value.take()?;
        let (prev, next) = (self.nodes[h.0].prev, self.nodes[h.0].next);
        match prev {
            Some(p) => self.nodes[p].next = next,
            None => self.head = next,
        }
        match next {
            Some(n) => self.nodes[n].prev = prev,
            None => self.tail = prev,
        }
        self.nodes[h.0].prev = None;
        self.nodes[h.0].next = None;
        self.free.push(h.0);
        self.len -= 1;
        Some(value)
    }

    pub fn pop_tail(&mut self) -> Option<T> {
        let t = self.tail?;
        self.remove(Handle(t))
    }

    pub fn tail(&self) -> Option<Handle> {
        self.tail.map(Handle)
    }

    pub fn head(&self) -> Option<Handle> {
        self.head.map(Handle)
    }

    /// Neighbour one step towards the head.
    pub fn towards_head(&self, h: Handle) -> Option<Handle> {
        self.nodes.get(h.0)?.prev.map(Handle)
    }

    pub fn get(&self, h: Handle) -> Option<&T> {
        self.nodes.get(h.0)?.value.as_ref()
    }

    pub fn get_mut(&mut self, h: Handle) -> Option<&mut T> {
        self.nodes.get_mut(h.0)?.value.as_mut()
    }

    /// Iterates from head to tail.
    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        let mut cur = self.head;
        std::iter::from_fn(move || {
            let i = cur?;
            cur = self.nodes[i].next;
            self.nodes[i].value.as_ref()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_remove_reuse() {
        let mut l = IndexList::new();
        let a = l.push_head('a');
        let b = l.push_head('b');
        let c = l.push_head('c');
        assert_eq!(l.iter().copied().collect::<String>(), "cba");
        assert_eq!(l.remove(b), Some('b'));
        assert_eq!(l.remove(b), None);
        assert_eq!(l.iter().copied().collect::<String>(), "ca");
        assert_eq!(l.towards_head(a), Some(c));
        let d = l.push_head('d');
        assert_eq!(d, b, "freed slot is reused");
        assert_eq!(l.pop_tail(), Some('a'));
        assert_eq!(l.pop_tail(), Some('c'));
        assert_eq!(l.pop_tail(), Some('d'));
        assert!(l.is_empty() && l.head().is_none() && l.tail().is_none());
    }
}
