use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::RadioGraph;
use crate::error::Result;

/// `i j` per line for every undirected edge with `i < j`.
pub fn write_edge_list(graph: &RadioGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, j) in graph.adjacency.edges() {
        writeln!(w, "{i} {j}")?;
    }
    w.flush()?;
    Ok(())
}

/// `idx,row,col,x_m,y_m,observed_rss`; unobserved nodes leave the last field empty.
pub fn write_node_table(graph: &RadioGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "idx,row,col,x_m,y_m,observed_rss")?;
    for (i, n) in graph.nodes.iter().enumerate() {
        let obs = n.observed_rss_dbm.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{i},{},{},{},{},{obs}",
            n.grid.row, n.grid.col, n.position_m.0, n.position_m.1
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, EncodingStrategy};
    use crate::propagation::RadiomapTensor;
    use crate::scenario::tests::free_scenario;
    use crate::scenario::BlockIndex;

    #[test]
    fn exports_edges_and_nodes() {
        let s = free_scenario(2, 2, &[]);
        let mut t = RadiomapTensor::for_scenario(&s);
        t.set(0, 0, -70.5);
        let mask = [true, false, false, false];
        let g = build_graph(&s, &t, BlockIndex::new(0, 0), 1750.0, &mask, &EncodingStrategy::adjacency(), None)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_edge_list(&g, dir.path().join("e.txt")).unwrap();
        write_node_table(&g, dir.path().join("n.csv")).unwrap();
        let edges = std::fs::read_to_string(dir.path().join("e.txt")).unwrap();
        assert_eq!(edges, "0 1\n0 2\n1 3\n2 3\n");
        let nodes = std::fs::read_to_string(dir.path().join("n.csv")).unwrap();
        assert_eq!(nodes.lines().nth(1).unwrap(), "0,0,0,2.5,2.5,-70.5");
        assert_eq!(nodes.lines().nth(2).unwrap(), "1,0,1,7.5,2.5,");
    }
}
