#include "debias/design.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "debias/errors.hpp"

namespace debias {

PotentialOutcomeTable make_table(Vec a, Vec b, Matrix z) {
    const auto n = a.size();
    if (b.size() != n || z.rows() != n)
        throw DimensionMismatch("potential-outcome table: a, b, z row counts "
                                "disagree");
    if (n < 4) throw DimensionMismatch("potential-outcome table needs n >= 4");
    const auto k = z.cols();
    if (k < 1) throw DimensionMismatch("potential-outcome table needs k >= 1");
    if (n <= k + 2)
        throw DimensionMismatch("potential-outcome table needs n > k + 2");
    return PotentialOutcomeTable{std::move(a), std::move(b), std::move(z)};
}

double average_treatment_effect(const PotentialOutcomeTable& table) {
    return (table.a - table.b).mean();
}

Assignment make_assignment(std::vector<int> treated, int n) {
    std::sort(treated.begin(), treated.end());
    const int n_a = static_cast<int>(treated.size());
    if (n_a < 2 || n_a > n - 2)
        throw DegenerateArm("assignment needs 2 <= n_treated <= n - 2, got " +
                            std::to_string(n_a) + " of " + std::to_string(n));
    for (int i = 0; i < n_a; ++i) {
        if (treated[i] < 0 || treated[i] >= n)
            throw IndexOutOfRange("treated index " +
                                  std::to_string(treated[i]) +
                                  " outside [0, " + std::to_string(n) + ")");
        if (i > 0 && treated[i] == treated[i - 1])
            throw DomainError("treated index " + std::to_string(treated[i]) +
                              " repeated");
    }
    return Assignment{std::move(treated), n};
}

int ExperimentData::n_treated() const {
    int c = 0;
    for (int v : t) c += v;
    return c;
}

ExperimentData make_experiment_data(Vec y, std::vector<int> t, Matrix z_raw) {
    const auto n = y.size();
    if (static_cast<Eigen::Index>(t.size()) != n || z_raw.rows() != n)
        throw DimensionMismatch("experiment data: y, t, z row counts disagree");
    if (n < 4) throw DimensionMismatch("experiment data needs n >= 4");
    if (z_raw.cols() < 1)
        throw DimensionMismatch("experiment data needs k >= 1");
    int n_a = 0;
    for (int v : t) {
        if (v != 0 && v != 1)
            throw NonBinaryTreatment("treatment value " + std::to_string(v) +
                                     " is not 0/1");
        n_a += v;
    }
    const int n_b = static_cast<int>(n) - n_a;
    if (n_a < 2 || n_b < 2)
        throw DegenerateArm("each arm needs at least 2 units, got " +
                            std::to_string(n_a) + "/" + std::to_string(n_b));
    Vec shift = z_raw.colwise().mean();
    Matrix z = z_raw.rowwise() - shift.transpose();
    return ExperimentData{std::move(y), std::move(t), std::move(z),
                          std::move(shift)};
}

ExperimentData realize(const PotentialOutcomeTable& table,
                       const Assignment& assignment) {
    const int n = table.n();
    if (assignment.n != n)
        throw DimensionMismatch("assignment built for n = " +
                                std::to_string(assignment.n) +
                                ", table has n = " + std::to_string(n));
    std::vector<int> t(n, 0);
    for (int i : assignment.treated) t[i] = 1;
    Vec y(n);
    for (int i = 0; i < n; ++i) y[i] = t[i] ? table.a[i] : table.b[i];
    return make_experiment_data(std::move(y), std::move(t), table.z);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.begin(), e = s.end();
    while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
    while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
    return std::string(b, e);
}

double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
    const std::string s = trim(raw);
    if (s.empty()) throw ParseError("empty cell", row, col);
    double v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ParseError("cannot parse '" + s + "' as a number", row, col);
    if (!std::isfinite(v))
        throw ParseError("non-finite value '" + s + "'", row, col);
    return v;
}

}  // namespace

ExperimentData ingest_csv(std::istream& in, const CsvColumns& columns) {
    if (columns.z.empty())
        throw ParseError("at least one covariate column must be named", 1, 1);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty input", 1, 1);
    // Tolerate a UTF-8 byte order mark on the first line.
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
        line.erase(0, 3);
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);

    auto find_col = [&](const std::string& name) -> std::size_t {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        throw ParseError("column '" + name + "' not found in header", 1, 1);
    };
    const std::size_t y_col = find_col(columns.y);
    const std::size_t t_col = find_col(columns.t);
    std::vector<std::size_t> z_cols;
    z_cols.reserve(columns.z.size());
    for (const auto& name : columns.z) z_cols.push_back(find_col(name));

    std::vector<double> ys;
    std::vector<int> ts;
    std::vector<std::vector<double>> zs;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) +
                                 " fields, got " +
                                 std::to_string(cells.size()),
                             row, cells.size() + 1);
        ys.push_back(parse_cell(cells[y_col], row, y_col + 1));
        const double tv = parse_cell(cells[t_col], row, t_col + 1);
        if (tv != 0.0 && tv != 1.0)
            throw NonBinaryTreatment("row " + std::to_string(row) +
                                     ": treatment value " +
                                     std::to_string(tv) + " is not 0/1");
        ts.push_back(tv == 1.0 ? 1 : 0);
        std::vector<double> zrow;
        zrow.reserve(z_cols.size());
        for (std::size_t j : z_cols)
            zrow.push_back(parse_cell(cells[j], row, j + 1));
        zs.push_back(std::move(zrow));
    }
    const auto n = static_cast<Eigen::Index>(ys.size());
    if (n < 4) throw ParseError("need at least 4 data rows", row, 1);
    Vec y = Eigen::Map<Vec>(ys.data(), n);
    Matrix z(n, static_cast<Eigen::Index>(z_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i)
        for (std::size_t j = 0; j < z_cols.size(); ++j)
            z(i, static_cast<Eigen::Index>(j)) = zs[i][j];
    return make_experiment_data(std::move(y), std::move(ts), std::move(z));
}

ExperimentData ingest_csv_file(const std::string& path,
                               const CsvColumns& columns) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");
    return ingest_csv(f, columns);
}

GroupStats group_stats(const ExperimentData& data) {
    const int n = data.n();
    const int k = data.k();
    GroupStats g;
    g.n = n;
    g.n_a = data.n_treated();
    g.n_b = n - g.n_a;
    g.p_a = static_cast<double>(g.n_a) / n;
    g.p_b = static_cast<double>(g.n_b) / n;

    Vec sz_a = Vec::Zero(k), sz_b = Vec::Zero(k);
    Vec syz_a = Vec::Zero(k), syz_b = Vec::Zero(k);
    Matrix szz_a = Matrix::Zero(k, k), szz_b = Matrix::Zero(k, k);
    double sy_a = 0, sy_b = 0;
    for (int i = 0; i < n; ++i) {
        const auto zi = data.z.row(i).transpose();
        if (data.t[i]) {
            sy_a += data.y[i];
            sz_a += zi;
            syz_a += data.y[i] * zi;
            szz_a += zi * zi.transpose();
        } else {
            sy_b += data.y[i];
            sz_b += zi;
            syz_b += data.y[i] * zi;
            szz_b += zi * zi.transpose();
        }
    }
    g.mean_y_a = sy_a / g.n_a;
    g.mean_y_b = sy_b / g.n_b;
    g.mean_z_a = sz_a / g.n_a;
    g.mean_z_b = sz_b / g.n_b;
    g.mean_yz_a = syz_a / g.n_a;
    g.mean_yz_b = syz_b / g.n_b;
    g.mean_zz_a = SymMatrix(Matrix(szz_a / g.n_a));
    g.mean_zz_b = SymMatrix(Matrix(szz_b / g.n_b));
    g.mean_zz = SymMatrix(Matrix((szz_a + szz_b) / n));
    return g;
}

}  // namespace debias
