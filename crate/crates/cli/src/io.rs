//! CSV readers and writers. Subject indices never leave the process: files
//! refer to subjects by id, arms by `T`/`C`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use pairdesign::{Allocation, BlockPartition, MatchSet, ResponseModel, Subjects};

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, csv::Position::line)
}

fn parse_cell(record: &csv::StringRecord, column: usize, header: &str) -> Result<f64> {
    let cell = &record[column];
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| anyhow!("line {}: column {header:?} is not a finite number: {cell:?}", line_of(record)))
}

fn records<R: Read>(rdr: &mut csv::Reader<R>, width: usize) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(p) => anyhow!("line {}: {e}", p.line()),
            None => anyhow!("{e}"),
        })?;
        if rec.len() != width {
            bail!("line {}: expected {width} fields, found {}", line_of(&rec), rec.len());
        }
        out.push(rec);
    }
    Ok(out)
}

/// Subjects from `id,x1,…,xd`.
pub fn read_subjects<R: Read>(input: R) -> Result<Subjects> {
    read_subjects_named(input).map(|(s, _)| s)
}

/// Subjects plus the covariate column names.
pub fn read_subjects_named<R: Read>(input: R) -> Result<(Subjects, Vec<String>)> {
    let mut rdr = reader(input);
    let headers = rdr.headers().context("reading header")?.clone();
    if headers.is_empty() || &headers[0] != "id" {
        bail!("line 1: header must start with \"id\"");
    }
    let d = headers.len() - 1;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for rec in records(&mut rdr, headers.len())? {
        ids.push(rec[0].to_string());
        rows.push((1..=d).map(|j| parse_cell(&rec, j, &headers[j])).collect::<Result<Vec<f64>>>()?);
    }
    let names = headers.iter().skip(1).map(String::from).collect();
    Ok((Subjects::from_rows(ids, &rows, d)?, names))
}

pub fn read_subjects_file(path: &Path) -> Result<(Subjects, Vec<String>)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_subjects_named(f).with_context(|| format!("in {}", path.display()))
}

/// Subjects plus a binary outcome column from `id,x1,…,xd,y`.
pub fn read_outcome_data(path: &Path) -> Result<(Subjects, Vec<u8>)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rdr = reader(f);
    let headers = rdr.headers().context("reading header")?.clone();
    if headers.len() < 2 || &headers[0] != "id" || &headers[headers.len() - 1] != "y" {
        bail!("{}: line 1: header must be id,x1,…,xd,y", path.display());
    }
    let d = headers.len() - 2;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for rec in records(&mut rdr, headers.len())? {
        ids.push(rec[0].to_string());
        rows.push((1..=d).map(|j| parse_cell(&rec, j, &headers[j])).collect::<Result<Vec<f64>>>()?);
        y.push(match &rec[d + 1] {
            "0" => 0,
            "1" => 1,
            other => bail!("line {}: y must be 0 or 1, got {other:?}", line_of(&rec)),
        });
    }
    Ok((Subjects::from_rows(ids, &rows, d)?, y))
}

/// Ids and response model from `id,p_t,p_c`.
pub fn read_probabilities<R: Read>(input: R) -> Result<(Vec<String>, ResponseModel)> {
    let mut rdr = reader(input);
    let headers = rdr.headers().context("reading header")?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "p_t", "p_c"] {
        bail!("line 1: header must be id,p_t,p_c");
    }
    let mut ids = Vec::new();
    let (mut pt, mut pc) = (Vec::new(), Vec::new());
    for rec in records(&mut rdr, 3)? {
        let t = parse_cell(&rec, 1, "p_t")?;
        let c = parse_cell(&rec, 2, "p_c")?;
        for (name, p) in [("p_t", t), ("p_c", c)] {
            if !(0.0..=1.0).contains(&p) {
                bail!("line {}: {name} = {p} is outside [0, 1]", line_of(&rec));
            }
        }
        ids.push(rec[0].to_string());
        pt.push(t);
        pc.push(c);
    }
    pairdesign::domain::check_subject_count(ids.len())?;
    Ok((ids, ResponseModel::new(pt, pc)?))
}

fn index_of(ids: &[String]) -> Result<HashMap<&str, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.as_str(), i).is_some() {
            bail!("duplicate subject id {id:?}");
        }
    }
    Ok(map)
}

/// `pair,id_1,id_2,distance`.
pub fn write_matches<W: Write>(out: W, ids: &[String], matches: &MatchSet, distances: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pair", "id_1", "id_2", "distance"])?;
    for (k, (&(i, j), d)) in matches.pairs().iter().zip(distances).enumerate() {
        w.write_record([(k + 1).to_string(), ids[i].clone(), ids[j].clone(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Match set and distances back from [`write_matches`] output.
pub fn read_matches<R: Read>(input: R, ids: &[String]) -> Result<(MatchSet, Vec<f64>)> {
    let index = index_of(ids)?;
    let mut rdr = reader(input);
    let headers = rdr.headers().context("reading header")?.clone();
    if headers.iter().collect::<Vec<_>>() != ["pair", "id_1", "id_2", "distance"] {
        bail!("line 1: header must be pair,id_1,id_2,distance");
    }
    let mut pairs = Vec::new();
    let mut dist = Vec::new();
    for rec in records(&mut rdr, 4)? {
        let lookup = |c: usize| {
            index
                .get(&rec[c])
                .copied()
                .ok_or_else(|| anyhow!("line {}: unknown subject id {:?}", line_of(&rec), &rec[c]))
        };
        pairs.push((lookup(1)?, lookup(2)?));
        dist.push(parse_cell(&rec, 3, "distance")?);
    }
    Ok((MatchSet::new(pairs, ids.len())?, dist))
}

/// `id,arm` with arms `T`/`C`.
pub fn write_allocation<W: Write>(out: W, ids: &[String], w: &Allocation) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["id", "arm"])?;
    for (id, &s) in ids.iter().zip(w.signs()) {
        wr.write_record([id.as_str(), if s > 0 { "T" } else { "C" }])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_allocation<R: Read>(input: R, ids: &[String]) -> Result<Allocation> {
    let index = index_of(ids)?;
    let mut rdr = reader(input);
    let headers = rdr.headers().context("reading header")?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "arm"] {
        bail!("line 1: header must be id,arm");
    }
    let mut w = vec![0i8; ids.len()];
    for rec in records(&mut rdr, 2)? {
        let i =
            *index.get(&rec[0]).ok_or_else(|| anyhow!("line {}: unknown subject id {:?}", line_of(&rec), &rec[0]))?;
        w[i] = match &rec[1] {
            "T" => 1,
            "C" => -1,
            other => bail!("line {}: arm must be T or C, got {other:?}", line_of(&rec)),
        };
    }
    Ok(Allocation::new(w)?)
}

/// `id,block` with 1-based block numbers.
pub fn write_blocks<W: Write>(out: W, ids: &[String], partition: &BlockPartition) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["id", "block"])?;
    for (id, b) in ids.iter().zip(partition.membership()) {
        wr.write_record([id.clone(), (b + 1).to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_blocks<R: Read>(input: R, ids: &[String]) -> Result<BlockPartition> {
    let index = index_of(ids)?;
    let mut rdr = reader(input);
    let headers = rdr.headers().context("reading header")?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "block"] {
        bail!("line 1: header must be id,block");
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for rec in records(&mut rdr, 2)? {
        let i =
            *index.get(&rec[0]).ok_or_else(|| anyhow!("line {}: unknown subject id {:?}", line_of(&rec), &rec[0]))?;
        let b: usize = rec[1]
            .parse()
            .ok()
            .filter(|&b| b >= 1)
            .ok_or_else(|| anyhow!("line {}: block must be a positive integer", line_of(&rec)))?;
        if blocks.len() < b {
            blocks.resize(b, Vec::new());
        }
        blocks[b - 1].push(i);
    }
    Ok(BlockPartition::new(blocks, ids.len())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subjects_errors_carry_line_numbers() {
        let err = read_subjects("id,x1\na,1\nb,oops\n".as_bytes()).unwrap_err();
        assert!(format!("{err:#}").contains("line 3"), "{err:#}");
        let err = read_subjects("id,x1\na,1\nb,2,3\n".as_bytes()).unwrap_err();
        assert!(format!("{err:#}").contains("line 3"), "{err:#}");
        let err = read_subjects("name,x1\na,1\n".as_bytes()).unwrap_err();
        assert!(format!("{err:#}").contains("line 1"));
        assert!(read_subjects("id,x1\na,1\nb,2\nc,3\n".as_bytes()).is_err());
    }

    #[test]
    fn probabilities_are_range_checked() {
        let err = read_probabilities("id,p_t,p_c\na,0.5,0.5\nb,1.5,0.5\nc,0,0\nd,1,1\n".as_bytes()).unwrap_err();
        assert!(format!("{err:#}").contains("line 3"));
    }

    #[test]
    fn allocation_round_trip() {
        let ids: Vec<String> = ["s1", "s2", "s3", "s4"].map(String::from).to_vec();
        let w = Allocation::new(vec![1, -1, -1, 1]).unwrap();
        let mut buf = Vec::new();
        write_allocation(&mut buf, &ids, &w).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "id,arm\ns1,T\ns2,C\ns3,C\ns4,T\n");
        assert_eq!(read_allocation(buf.as_slice(), &ids).unwrap(), w);
    }

    #[test]
    fn matches_and_blocks_round_trip() {
        let ids: Vec<String> = (1..=6).map(|i| format!("p{i}")).collect();
        let m = MatchSet::from_one_based(&[(2, 5), (1, 3), (4, 6)], 6).unwrap();
        let dist = vec![0.25, 1.0, 3.5];
        let mut buf = Vec::new();
        write_matches(&mut buf, &ids, &m, &dist).unwrap();
        let (back, d) = read_matches(buf.as_slice(), &ids).unwrap();
        assert_eq!((back, d), (m, dist));

        let p = BlockPartition::from_one_based(&[vec![2, 4, 5, 6], vec![1, 3]], 6).unwrap();
        let mut buf = Vec::new();
        write_blocks(&mut buf, &ids, &p).unwrap();
        let back = read_blocks(buf.as_slice(), &ids).unwrap();
        assert_eq!(back.membership(), p.membership());
    }
}
