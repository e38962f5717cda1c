#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <sstream>

using namespace kaf;

TEST(MatrixIo, RoundTripIsBitExact)
{
  Rng rng(81);
  std::normal_distribution<double> normal(0.0, 1e3);
  RowMatrix m(17, 4);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = normal(rng);
  m(0, 0) = std::numeric_limits<double>::denorm_min();
  m(0, 1) = -0.0;
  m(0, 2) = 1.0 / 3.0;
  m(0, 3) = std::numeric_limits<double>::max();
  std::stringstream ss;
  io::write_matrix(ss, m, "system=lorenz63 obs_dt=0.1 seed=7");
  const io::MatrixFile back = io::read_matrix(ss);
  EXPECT_EQ(back.meta, "system=lorenz63 obs_dt=0.1 seed=7");
  ASSERT_EQ(back.data.rows(), 17);
  ASSERT_EQ(back.data.cols(), 4);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      EXPECT_EQ(back.data(i, j), m(i, j));
  EXPECT_TRUE(std::signbit(back.data(0, 1)));
}

TEST(MatrixIo, EmptyMatrix)
{
  std::stringstream ss;
  io::write_matrix(ss, RowMatrix(0, 3));
  const io::MatrixFile back = io::read_matrix(ss);
  EXPECT_EQ(back.data.rows(), 0);
  EXPECT_EQ(back.data.cols(), 3);
}

TEST(MatrixIo, RejectsMalformedInput)
{
  std::stringstream bad_header("# something else\n1 2\n");
  EXPECT_THROW(io::read_matrix(bad_header), Error);
  std::stringstream truncated("# kaf-matrix 1 rows=2 cols=2\n1 2\n3\n");
  EXPECT_THROW(io::read_matrix(truncated), Error);
  std::stringstream bad_number("# kaf-matrix 1 rows=1 cols=2\n1 x\n");
  EXPECT_THROW(io::read_matrix(bad_number), Error);
}
